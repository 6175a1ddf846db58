"""Finite elements for the regularized Poisson-Boltzmann problem with guaranteed functional error bounds.

Submodules: mesh, quadrature, scalar_math, fem, solver, flux, estimator,
amr, presets, vtk, verify, cli.
"""
__version__ = "0.1.0"
