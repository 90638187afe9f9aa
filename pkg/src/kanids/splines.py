"""Uniform B-spline grids and basis evaluation.

A grid covers ``[domain_lo, domain_hi]`` with ``grid_size`` equal intervals
and is extended by ``degree`` extra knots on each side, continuing the
uniform spacing.  That gives ``grid_size + degree`` basis functions, each
nonnegative and locally supported, summing to 1 on the domain interior.

Evaluation uses the iterative Cox-de Boor recursion over the whole knot
vector; first derivatives come from the standard degree-lowering formula.
Inputs outside the domain are allowed and simply see the natural decay of
the basis (no clamping).  All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplineGrid:
    """Knot vector plus degree defining one family of B-spline bases.

    ``knots`` has length ``grid_size + 2*degree + 1``: the interior knots are
    uniformly spaced over the domain and ``degree`` extension knots continue
    the spacing on each side.  Immutable after construction.
    """

    domain_lo: float
    domain_hi: float
    grid_size: int
    degree: int
    knots: np.ndarray

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.degree

    @property
    def spacing(self) -> float:
        return (self.domain_hi - self.domain_lo) / self.grid_size


@dataclass(frozen=True)
class BasisEval:
    """All basis function values and first derivatives at a single point."""

    values: np.ndarray
    derivs: np.ndarray


def make_grid(domain_lo: float, domain_hi: float, grid_size: int,
              degree: int = 3) -> SplineGrid:
    """Build a uniform extended knot grid on ``[domain_lo, domain_hi]``.

    Raises ``ValueError`` for invalid bounds (``domain_lo >= domain_hi``) or
    invalid sizes (``grid_size < 1`` or ``degree < 0``).
    """
    if not (float(domain_lo) < float(domain_hi)):
        raise ValueError(
            f"invalid bounds: domain_lo ({domain_lo}) must be < domain_hi ({domain_hi})"
        )
    if grid_size < 1:
        raise ValueError(f"invalid size: grid_size must be >= 1, got {grid_size}")
    if degree < 0:
        raise ValueError(f"invalid size: degree must be >= 0, got {degree}")

    h = (float(domain_hi) - float(domain_lo)) / grid_size
    idx = np.arange(grid_size + 2 * degree + 1, dtype=np.float64)
    knots = float(domain_lo) + (idx - degree) * h
    knots.setflags(write=False)
    return SplineGrid(float(domain_lo), float(domain_hi), int(grid_size),
                      int(degree), knots)


def basis_and_deriv(grid: SplineGrid, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate all basis functions and their first derivatives.

    Args:
        grid: the knot grid.
        x: array of evaluation points, any shape; flattened internally.

    Returns:
        ``(values, derivs)``, each of shape ``(x.size, grid.n_basis)``.

    The order-0 seed uses half-open intervals ``[t_i, t_{i+1})`` with the
    very last interval closed on the right, so the degree-0 basis covers the
    full closed domain.  For ``degree >= 1`` this special case is multiplied
    by a zero factor and has no effect.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input: x contains NaN or infinity")

    t = grid.knots
    r = grid.degree
    xc = x[:, None]

    b = ((xc >= t[:-1]) & (xc < t[1:])).astype(np.float64)
    b[:, -1] = np.where(x == t[-1], 1.0, b[:, -1])

    prev = b
    for k in range(1, r + 1):
        d_left = t[k:-1] - t[:-k - 1]
        d_right = t[k + 1:] - t[1:-k]
        prev = b
        b = (xc - t[:-k - 1]) / d_left * b[:, :-1] \
            + (t[k + 1:] - xc) / d_right * b[:, 1:]

    if r == 0:
        derivs = np.zeros_like(b)
    else:
        # d/dx B_i^r = r * (B_i^{r-1}/(t_{i+r}-t_i) - B_{i+1}^{r-1}/(t_{i+r+1}-t_{i+1}))
        d_left = t[r:-1] - t[:-r - 1]
        d_right = t[r + 1:] - t[1:-r]
        derivs = r * (prev[:, :-1] / d_left - prev[:, 1:] / d_right)

    return b, derivs


def eval_basis(grid: SplineGrid, x: float) -> BasisEval:
    """Evaluate all basis functions and derivatives at a single point."""
    if not np.isfinite(x):
        raise ValueError(f"non-finite input: x = {x}")
    values, derivs = basis_and_deriv(grid, np.array([x], dtype=np.float64))
    return BasisEval(values[0], derivs[0])
