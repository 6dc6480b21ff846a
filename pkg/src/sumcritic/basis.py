"""Truncated series feature families on [-1, 1] and their derivative bounds.

Every feature is bounded by 1 in magnitude on the domain, and its derivative
is bounded by a known constant. Constant terms are left out because they
cancel in any difference of expectations.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class DomainError(ValueError):
    """Raised when a point lies outside [-1, 1]."""


class BasisKind(str, Enum):
    TAYLOR = "taylor"
    FOURIER = "fourier"


@dataclass(frozen=True)
class SeriesBasis:
    """Truncated Taylor (powers of x about 0) or Fourier (period 2) family.

    Feature order is ``x, x**2, ..., x**N`` for Taylor and
    ``cos(pi x), sin(pi x), ..., cos(N pi x), sin(N pi x)`` for Fourier.
    """

    kind: BasisKind
    n_terms: int = 20

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if int(self.n_terms) != self.n_terms or self.n_terms < 1:
            raise ValueError(f"n_terms must be a positive integer, got {self.n_terms!r}")

    @property
    def components_per_term(self) -> int:
        return 1 if self.kind is BasisKind.TAYLOR else 2

    @property
    def size(self) -> int:
        return self.n_terms * self.components_per_term

    def orders(self) -> np.ndarray:
        """Term index n (starting at 1) for every feature slot."""
        return np.repeat(np.arange(1, self.n_terms + 1), self.components_per_term)


def _as_domain_array(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.abs(x) <= 1.0):
        bad = x[~(np.abs(x) <= 1.0)]
        raise DomainError(
            f"{bad.size} value(s) outside [-1, 1] (first: {bad.flat[0]!r}); normalize data first"
        )
    return x


def _powers(xs, count):
    # x, x**2, ..., x**count by repeated multiplication
    return np.cumprod(np.broadcast_to(xs, xs.shape[:-1] + (count,)), axis=-1)


def eval_features(basis: SeriesBasis, x) -> np.ndarray:
    """Evaluate all features at ``x``.

    A scalar ``x`` gives a vector of length ``basis.size``; an array of shape
    ``(n,)`` gives a matrix of shape ``(n, basis.size)``.
    """
    x = _as_domain_array(x)
    n = np.arange(1, basis.n_terms + 1, dtype=np.float64)
    xs = x[..., None]
    if basis.kind is BasisKind.TAYLOR:
        return _powers(xs, basis.n_terms)
    angle = np.pi * n * xs
    out = np.empty(x.shape + (basis.size,))
    out[..., 0::2] = np.cos(angle)
    out[..., 1::2] = np.sin(angle)
    return out


def eval_feature_derivatives(basis: SeriesBasis, x) -> np.ndarray:
    """d/dx of every feature at ``x``; same layout as :func:`eval_features`."""
    x = _as_domain_array(x)
    n = np.arange(1, basis.n_terms + 1, dtype=np.float64)
    xs = x[..., None]
    if basis.kind is BasisKind.TAYLOR:
        lower = np.ones(x.shape + (basis.n_terms,))
        lower[..., 1:] = _powers(xs, basis.n_terms - 1)
        return n * lower
    angle = np.pi * n * xs
    out = np.empty(x.shape + (basis.size,))
    out[..., 0::2] = -np.pi * n * np.sin(angle)
    out[..., 1::2] = np.pi * n * np.cos(angle)
    return out


def derivative_bounds(basis: SeriesBasis) -> np.ndarray:
    """Upper bound on |feature'(x)| over [-1, 1] for each feature slot."""
    n = basis.orders().astype(np.float64)
    if basis.kind is BasisKind.TAYLOR:
        return n
    return np.pi * n
