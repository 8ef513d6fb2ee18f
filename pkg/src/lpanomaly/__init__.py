"""Anomaly detection for historical LP planning cases.

Univariate scoring uses a modified ECOD detector; bivariate scoring runs a
linear-regression residual detector and a Gaussian-density detector on pairs
selected by a penalized Kendall spanning tree.  A small simplex core with
dual extraction backs the synthetic plan generator.
"""

__version__ = "0.1.0"
