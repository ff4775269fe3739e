"""Phase-space functions, Poisson brackets and conservation checks.

Functions on the tangent bundle are represented in (x, xi) coordinates; the
canonical bracket lives on the cotangent bundle, so bracket evaluation chain
rules every differential through the fibrewise Legendre transform p = g xi.

Bracket sign convention: {F, G} = sum_i (dF/dx^i dG/dp_i - dF/dp_i dG/dx^i),
so {x^1, p_1} = +1 and {p_1, x^1} = -1.  Conservation along the geodesic flow
of H reads {H, F} = 0; that statement is insensitive to the overall sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dsl
from .dsl import Dual1
from .geometry import MetricField, PhasePoint, Trajectory


@dataclass
class CanonicalPoint:
    x: np.ndarray
    p: np.ndarray

    def __init__(self, x, p):
        self.x = np.asarray(x, dtype=float).copy()
        self.p = np.asarray(p, dtype=float).copy()
        if self.x.shape != self.p.shape or self.x.ndim != 1:
            raise ValueError("x and p must be vectors of equal length")


def legendre(metric: MetricField, p: PhasePoint) -> CanonicalPoint:
    """Tangent to cotangent: p_i = g_{ij} xi^j."""
    g = metric.values_at(p.x)
    return CanonicalPoint(p.x, g @ p.xi)


def legendre_inverse(metric: MetricField, cp: CanonicalPoint) -> PhasePoint:
    g = metric.values_at(cp.x)
    return PhasePoint(cp.x, np.linalg.solve(g, cp.p))


class PhaseFunction:
    """A real function of (x, xi) with exact dual-number differentials.

    fn receives two lists of scalar-like cells (coordinates, tangent
    components) and must combine them with arithmetic the dual numbers
    support.  The same closure therefore serves plain evaluation, batched
    evaluation over N points, and gradient extraction.
    """

    def __init__(self, fn: Callable, dim: int, name: str = ""):
        self.fn = fn
        self.dim = dim
        self.name = name or "phase-function"

    def value(self, x, xi) -> float:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return float(dsl.scalar_value(self.fn(list(x), list(xi))))

    def value_batch(self, xs, xis) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        xis = np.asarray(xis, dtype=float)
        n = self.dim
        out = self.fn([xs[:, i] for i in range(n)], [xis[:, i] for i in range(n)])
        return np.broadcast_to(np.asarray(dsl.scalar_value(out), dtype=float), (xs.shape[0],)).copy()

    def at(self, p: PhasePoint) -> float:
        return self.value(p.x, p.xi)

    def grad(self, x, xi) -> np.ndarray:
        """Gradient in (x, xi), length 2n, by one forward dual pass."""
        return self.grad_batch(np.asarray(x, dtype=float)[None, :], np.asarray(xi, dtype=float)[None, :])[0]

    def grad_batch(self, xs, xis) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        xis = np.asarray(xis, dtype=float)
        n = self.dim
        N = xs.shape[0]
        x_cells = dsl.dual1_seeds(xs, nvars=2 * n, offset=0)
        xi_cells = dsl.dual1_seeds(xis, nvars=2 * n, offset=n)
        out = self.fn(x_cells, xi_cells)
        if not isinstance(out, Dual1):
            return np.zeros((N, 2 * n))
        g = np.asarray(out.grad)
        return np.broadcast_to(g, (N, 2 * n)).copy()

    def _combine(self, other, op, sym):
        if isinstance(other, PhaseFunction):
            if other.dim != self.dim:
                raise ValueError("phase function dimensions differ")
            fn = lambda x, xi: op(self.fn(x, xi), other.fn(x, xi))
            name = f"({self.name} {sym} {other.name})"
        else:
            c = float(other)
            fn = lambda x, xi: op(self.fn(x, xi), c)
            name = f"({self.name} {sym} {c})"
        return PhaseFunction(fn, self.dim, name)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, "+")

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, "-")

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, "*")

    __rmul__ = __mul__

    def __neg__(self):
        return PhaseFunction(lambda x, xi: -self.fn(x, xi), self.dim, f"(-{self.name})")


def coordinate_function(i: int, dim: int) -> PhaseFunction:
    return PhaseFunction(lambda x, xi: x[i], dim, f"x{i+1}")


def momentum_function(metric: MetricField, i: int) -> PhaseFunction:
    """p_i = g_{ij} xi^j as a function on the tangent bundle."""
    n = metric.dim

    def fn(x, xi):
        cells = metric.eval_cells(x)
        s = cells[i, 0] * xi[0]
        for j in range(1, n):
            s = s + cells[i, j] * xi[j]
        return s

    return PhaseFunction(fn, n, f"p{i+1}")


def hamiltonian(metric: MetricField) -> PhaseFunction:
    """H = 1/2 g_{ij} xi^i xi^j (kinetic energy of the metric)."""
    n = metric.dim

    def fn(x, xi):
        cells = metric.eval_cells(x)
        s = None
        for i in range(n):
            for j in range(n):
                term = cells[i, j] * xi[i] * xi[j]
                s = term if s is None else s + term
        return 0.5 * s

    return PhaseFunction(fn, n, "H")


# ---------------------------------------------------------------------------
# brackets


def canonical_gradients(F: PhaseFunction, metric: MetricField, xs, xis):
    """Batched (dF/dx|_p, dF/dp) at phase points given in (x, xi) coordinates.

    With p = g(x) xi:  dF/dp = g^{-1} dF/dxi  and
    dF/dx^i|_p = dF/dx^i|_xi - xi^T (d_i g) (g^{-1} dF/dxi).
    """
    xs = np.asarray(xs, dtype=float)
    xis = np.asarray(xis, dtype=float)
    n = F.dim
    grads = F.grad_batch(xs, xis)  # (N, 2n)
    Fx, Fxi = grads[:, :n], grads[:, n:]
    gvals, ggrads = metric.values_and_grads(xs)  # (N,n,n), (N,n,n,k)
    Fp = np.linalg.solve(gvals, Fxi[..., None])[..., 0]
    corr = np.einsum("Nj,Njlk,Nl->Nk", xis, ggrads, Fp)
    return Fx - corr, Fp


def poisson_bracket(F: PhaseFunction, G: PhaseFunction, metric: MetricField, p: PhasePoint) -> float:
    """Canonical bracket {F, G} at one phase point."""
    Fx, Fp = canonical_gradients(F, metric, p.x[None, :], p.xi[None, :])
    Gx, Gp = canonical_gradients(G, metric, p.x[None, :], p.xi[None, :])
    return float(np.sum(Fx * Gp - Fp * Gx))


def poisson_bracket_batch(F, G, metric: MetricField, xs, xis) -> np.ndarray:
    Fx, Fp = canonical_gradients(F, metric, xs, xis)
    Gx, Gp = canonical_gradients(G, metric, xs, xis)
    return np.einsum("Ni,Ni->N", Fx, Gp) - np.einsum("Ni,Ni->N", Fp, Gx)


def conservation_drift(F: PhaseFunction, traj: Trajectory, floor: float = 1e-12) -> float:
    """max |F(t) - F(0)| / max(|F(0)|, floor) along a trajectory."""
    vals = F.value_batch(traj.xs, traj.xis)
    return float(np.max(np.abs(vals - vals[0])) / max(abs(float(vals[0])), floor))


def involution_matrix_for(
    fns: Sequence[PhaseFunction],
    metric: MetricField,
    points: Sequence[PhasePoint],
) -> np.ndarray:
    """Normalised pairwise bracket magnitudes, maximised over sample points.

    Entry (j, k) is max_p |{F_j, F_k}| / (1 + |dF_j| |dF_k|) with the
    differential norms taken in canonical coordinates.  Diagonal entries are
    exactly zero.
    """
    m = len(fns)
    xs = np.array([p.x for p in points])
    xis = np.array([p.xi for p in points])
    grads = []
    for F in fns:
        Fx, Fp = canonical_gradients(F, metric, xs, xis)
        grads.append((Fx, Fp, np.sqrt(np.sum(Fx * Fx + Fp * Fp, axis=1))))
    out = np.zeros((m, m))
    for j in range(m):
        Fx, Fp, nj = grads[j]
        for k in range(j + 1, m):
            Gx, Gp, nk = grads[k]
            br = np.einsum("Ni,Ni->N", Fx, Gp) - np.einsum("Ni,Ni->N", Fp, Gx)
            val = float(np.max(np.abs(br) / (1.0 + nj * nk)))
            out[j, k] = val
            out[k, j] = val
    return out


def independence_rank_for(
    fns: Sequence[PhaseFunction],
    points: Sequence[PhasePoint],
    rank_tol: float = 1e-8,
) -> int:
    """Max over points of the numerical rank of the stacked differentials."""
    xs = np.array([p.x for p in points])
    xis = np.array([p.xi for p in points])
    stacked = np.stack([F.grad_batch(xs, xis) for F in fns], axis=1)  # (N, m, 2n)
    best = 0
    for k in range(stacked.shape[0]):
        sv = np.linalg.svd(stacked[k], compute_uv=False)
        if sv.size and sv[0] > 0:
            best = max(best, int(np.sum(sv > rank_tol * sv[0])))
    return best
