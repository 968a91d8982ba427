"""Hybrid SBP finite difference / discontinuous Galerkin wave solvers."""
