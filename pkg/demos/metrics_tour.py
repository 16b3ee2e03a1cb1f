"""A short tour of the distances used throughout the package.

* ``bl_norm`` measures signed vectors on the label set (here H = 3 with
  labels placed at 1, 2, 3 on the line, so labels 1 and 3 are 2 apart).
* ``w1_spatial`` is the exact transport distance between atomic measures.
* ``bl_distance`` compares spatial measures whose masses differ.
* ``w1_product`` compares whole populations, position and label vector.
"""
import numpy as np

from multipop import DiscreteSpatialMeasure, EmpiricalMeasure, bl_distance, bl_norm, w1_product, w1_spatial

print("BL norm of (1, 0, 0):       ", bl_norm([1.0, 0.0, 0.0]))
print("BL norm of (0.3, -0.3, 0):  ", round(bl_norm([0.3, -0.3, 0.0]), 12))
print("BL norm of (2, -1, -1):     ", bl_norm([2.0, -1.0, -1.0]))

mu = DiscreteSpatialMeasure([[0.0], [1.0]], [0.5, 0.5])
nu = DiscreteSpatialMeasure([[0.5]], [1.0])
print("W1 between two atoms and their midpoint:", w1_spatial(mu, nu))

far = DiscreteSpatialMeasure([[10.0]], [0.4])
print("BL distance, unequal masses far apart:  ", bl_distance(nu, far))

rng = np.random.default_rng(1)
x = rng.normal(size=(200, 1))
P = EmpiricalMeasure(x, rng.dirichlet(np.ones(2), 200))
Q = EmpiricalMeasure(x + 0.1, P.labels)
print("W1 on the product space, shift by 0.1:  ", round(w1_product(P, Q), 12))
