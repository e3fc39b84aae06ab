"""Separable (CP-class) spline models: fitting, inversion and variational PDE solves."""
