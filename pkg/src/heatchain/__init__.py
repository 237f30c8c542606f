"""Numerical laboratory for heat transport in a harmonic chain with
momentum-exchange noise and Langevin baths.

Submodules
----------
lattice       discrete gradient/divergence and Neumann/Dirichlet bases
microsim      ensemble Monte Carlo of the chain dynamics
covariance    exact second-moment evolution and its Fourier algebra
kernels       macroscopic kernels (Green's function, q, g, W, b)
macro         cosine-Galerkin solver of the limiting fractional equation
singular      half-line singular integral operators T and T*
harness       CLI, configuration and cross-module experiments
"""

from heatchain.params import ModelParams

__version__ = "0.1.0"

__all__ = ["ModelParams", "__version__"]
