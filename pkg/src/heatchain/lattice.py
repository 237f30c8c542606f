"""Finite-lattice calculus on the sites {0, ..., n}.

Momenta live on the n+1 sites 0..n, stretches on the n bonds 1..n.  The
divergence maps site vectors to bond vectors, the gradient maps bond vectors
back to site vectors with the zero-padding convention f_0 = f_{n+1} = 0, so
that ``gradient = -divergence.T`` and ``gradient @ divergence`` is the
Neumann Laplacian.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


class DimensionError(ValueError):
    """Raised when a vector has the wrong length for the lattice."""


def _as_vector(f, length, what):
    f = np.asarray(f, dtype=float)
    if f.ndim < 1 or f.shape[-1] != length:
        raise DimensionError(f"{what}: expected trailing length {length}, got shape {f.shape}")
    return f


class LatticeSpec:
    """Sites x = 0..n with macroscopic positions u_x = x/(n+1)."""

    def __init__(self, n: int):
        if int(n) != n or n < 1:
            raise DimensionError(f"n must be a positive integer, got {n!r}")
        self.n = int(n)

    @property
    def u(self) -> np.ndarray:
        return np.arange(self.n + 1) / (self.n + 1)

    def __repr__(self):
        return f"LatticeSpec(n={self.n})"


def apply_divergence(f) -> np.ndarray:
    """(∇*f)_x = f_x - f_{x-1} for x = 1..n; acts on the last axis."""
    f = np.asarray(f, dtype=float)
    if f.ndim < 1 or f.shape[-1] < 2:
        raise DimensionError(f"divergence needs a site vector of length n+1 >= 2, got {f.shape}")
    return f[..., 1:] - f[..., :-1]


def apply_gradient(f) -> np.ndarray:
    """(∇f)_x = f_{x+1} - f_x for x = 0..n, with f_0 = f_{n+1} = 0."""
    f = np.asarray(f, dtype=float)
    if f.ndim < 1 or f.shape[-1] < 1:
        raise DimensionError(f"gradient needs a bond vector of length n >= 1, got {f.shape}")
    pad = [(0, 0)] * (f.ndim - 1) + [(1, 1)]
    g = np.pad(f, pad)
    return g[..., 1:] - g[..., :-1]


def apply_neumann_laplacian(f) -> np.ndarray:
    """Δ_N f_x = f_{x+1} + f_{x-1} - 2 f_x with f_{-1} = f_0, f_{n+1} = f_n."""
    return apply_gradient(apply_divergence(f))


def apply_dirichlet_laplacian(f) -> np.ndarray:
    """Δ_D f_x = f_{x+1} + f_{x-1} - 2 f_x on bonds 1..n with zero padding."""
    return apply_divergence(apply_gradient(f))


def divergence_matrix(n: int) -> np.ndarray:
    """Dense n x (n+1) matrix of ∇*."""
    D = np.zeros((n, n + 1))
    i = np.arange(n)
    D[i, i + 1] = 1.0
    D[i, i] = -1.0
    return D


def gradient_matrix(n: int) -> np.ndarray:
    """Dense (n+1) x n matrix of ∇ (equal to -∇*ᵀ)."""
    return -divergence_matrix(n).T


def neumann_laplacian_matrix(n: int) -> np.ndarray:
    G = gradient_matrix(n)
    return G @ divergence_matrix(n)


def eigenvalues(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (lambda_j, gamma_j) for j = 0..n, lambda_j = gamma_j**2."""
    j = np.arange(n + 1)
    gam = 2.0 * np.sin(np.pi * j / (2.0 * (n + 1)))
    return gam**2, gam


class NeumannBasis:
    """Orthonormal eigenvectors ψ_j of -Δ_N on n+1 sites.

    ``vectors[j]`` is ψ_j, so ``vectors @ f`` is the forward transform and
    ``vectors.T @ fhat`` the inverse.
    """

    def __init__(self, n: int):
        self.n = int(n)
        self.eigenvalues, self.gammas = eigenvalues(self.n)
        j = np.arange(self.n + 1)[:, None]
        x = np.arange(self.n + 1)[None, :]
        norm = np.sqrt(np.where(j == 0, 1.0, 2.0) / (self.n + 1))
        V = norm * np.cos(np.pi * j * (2 * x + 1) / (2.0 * (self.n + 1)))
        V.setflags(write=False)
        self.vectors = V

    def forward(self, f):
        f = _as_vector(f, self.n + 1, "neumann forward")
        return f @ self.vectors.T

    def inverse(self, fhat):
        fhat = _as_vector(fhat, self.n + 1, "neumann inverse")
        return fhat @ self.vectors

    def transform(self, f, direction="forward"):
        if direction == "forward":
            return self.forward(f)
        if direction == "inverse":
            return self.inverse(f)
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


class DirichletBasis:
    """Orthonormal eigenvectors φ_j, j = 1..n, of -Δ_D on the n bonds.

    Row ``vectors[j-1]`` is φ_j; its eigenvalue is ``eigenvalues[j-1]``,
    the same λ_j as the Neumann basis.
    """

    def __init__(self, n: int):
        self.n = int(n)
        lam, gam = eigenvalues(self.n)
        self.eigenvalues, self.gammas = lam[1:], gam[1:]
        j = np.arange(1, self.n + 1)[:, None]
        x = np.arange(1, self.n + 1)[None, :]
        V = np.sqrt(2.0 / (self.n + 1)) * np.sin(np.pi * j * x / (self.n + 1))
        V.setflags(write=False)
        self.vectors = V

    def forward(self, f):
        f = _as_vector(f, self.n, "dirichlet forward")
        return f @ self.vectors.T

    def inverse(self, fhat):
        fhat = _as_vector(fhat, self.n, "dirichlet inverse")
        return fhat @ self.vectors

    def transform(self, f, direction="forward"):
        if direction == "forward":
            return self.forward(f)
        if direction == "inverse":
            return self.inverse(f)
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


@lru_cache(maxsize=32)
def neumann_basis(n: int) -> NeumannBasis:
    return NeumannBasis(n)


@lru_cache(maxsize=32)
def dirichlet_basis(n: int) -> DirichletBasis:
    return DirichletBasis(n)


def neumann_transform(f, direction="forward"):
    f = np.asarray(f, dtype=float)
    return neumann_basis(f.shape[-1] - 1).transform(f, direction)


def dirichlet_transform(f, direction="forward"):
    f = np.asarray(f, dtype=float)
    return dirichlet_basis(f.shape[-1]).transform(f, direction)
