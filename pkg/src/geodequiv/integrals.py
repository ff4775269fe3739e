"""Commuting first integrals built from a pair of metrics on one chart.

Given metrics g and gbar, form G = g^{-1} gbar, take the characteristic
coefficients det(G - mu E) = c_0 mu^n + ... + c_n with c_0 = (-1)^n, the
matrices S_k = sum_{i<=k} c_i G^{k-i}, and

    I_k(x, xi) = (det g / det gbar)^{(k+2)/(n+1)} * gbar(S_k xi, xi).

When g and gbar share their unparameterised geodesics every I_k is constant
along the geodesic flow of g and the family is pairwise in involution.  The
whole pipeline is written over generic scalars so the same code yields plain
values, batched values, and exact dual-number differentials.

Sign conventions: with c_0 = (-1)^n one gets I_{n-1} = -g(xi, xi) (minus twice
the kinetic energy) for every pair, and I_0 equals (-1)^n times the classical
projective-factor integral exposed as painleve_I0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dsl, matops
from .dsl import Expression, d_exp
from .geometry import Chart, MetricField, PhasePoint
from .hamilton import PhaseFunction, involution_matrix_for, independence_rank_for


@dataclass(frozen=True)
class CharCoeffs:
    """Coefficients of det(G - mu E) in descending powers of mu; c[0] = (-1)^n."""

    c: tuple[float, ...]

    def __post_init__(self):
        n = len(self.c) - 1
        if self.c[0] != (-1.0) ** n:
            raise ValueError("leading characteristic coefficient must be (-1)^n")

    def __getitem__(self, i: int) -> float:
        return self.c[i]

    def __len__(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class EigenProfile:
    values: tuple[float, ...]  # ascending, with multiplicity
    distinct: tuple[float, ...]  # cluster representatives, ascending
    multiplicities: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.distinct)

    @property
    def strictly_nonproportional(self) -> bool:
        return self.m == len(self.values)


class MetricPair:
    """Two metrics on a shared chart, candidates for geodesic equivalence."""

    def __init__(self, g: MetricField, gbar: MetricField, pair_id: str = "pair"):
        if g.chart != gbar.chart:
            raise ValueError("metrics of a pair must live on the same chart")
        self.g = g
        self.gbar = gbar
        self.chart = g.chart
        self.pair_id = pair_id

    @property
    def dim(self) -> int:
        return self.g.dim

    def check_positive_definite(self, samples: int = 32, seed: int = 0) -> None:
        self.g.check_positive_definite(samples, seed)
        self.gbar.check_positive_definite(samples, seed)


# ---------------------------------------------------------------------------
# characteristic data


def char_coeffs(G: np.ndarray) -> CharCoeffs:
    """Faddeev-LeVerrier characteristic coefficients of a plain float matrix."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    cs = _char_coeffs_cells(matops.from_cells(G.tolist()))
    vals = [float((-1.0) ** n)] + [float(dsl.scalar_value(c)) for c in cs[1:]]
    return CharCoeffs(tuple(vals))


def _char_coeffs_cells(G: np.ndarray) -> list:
    """Generic Faddeev-LeVerrier: returns [c_0 .. c_n] for det(G - mu E) with
    c_0 = (-1)^n exactly.  Cells may be any scalar-like."""
    n = G.shape[0]
    sign = (-1.0) ** n
    # monic convention first: det(mu I - G) = mu^n + a_1 mu^{n-1} + ... + a_n
    a = []
    M = G.copy()
    for k in range(1, n + 1):
        if k > 1:
            M = matops.matmul(G, matops.add_scaled_identity(M, a[-1]))
        a.append((-1.0 / k) * matops.trace(M))
    return [sign] + [sign * ak for ak in a]


def g_operator(pair: MetricPair, x) -> np.ndarray:
    """G = g^{-1} gbar as a float matrix at the point x."""
    g = pair.g.values_at(x)
    gbar = pair.gbar.values_at(x)
    return np.linalg.solve(g, gbar)


def s_matrix(pair: MetricPair, x, k: int) -> np.ndarray:
    """S_k = sum_{i=0}^k c_i G^{k-i} (Horner accumulated) at the point x."""
    n = pair.dim
    if not 0 <= k <= n - 1:
        raise ValueError("k must lie in 0..n-1")
    G = g_operator(pair, x)
    c = char_coeffs(G)
    S = c[0] * np.eye(n)
    for i in range(1, k + 1):
        S = S @ G + c[i] * np.eye(n)
    return S


# ---------------------------------------------------------------------------
# the integrals


def _pipeline(pair: MetricPair, x_cells: list, xi_cells: list, ks: Sequence[int]) -> list:
    """Evaluate I_k for all requested k over generic scalar cells."""
    n = pair.dim
    gm = pair.g.eval_cells(x_cells)
    gb = pair.gbar.eval_cells(x_cells)
    Lg = matops.cholesky(gm)
    Lb = matops.cholesky(gb)
    G = matops.chol_solve_mat(Lg, gb)
    c = _char_coeffs_cells(G)
    logratio = matops.chol_logdet(Lg) - matops.chol_logdet(Lb)
    kmax = max(ks)
    S = matops.scale(matops.identity_obj(n), c[0])
    quads = {}
    for k in range(kmax + 1):
        if k > 0:
            S = matops.add_scaled_identity(matops.matmul(S, G), c[k])
        if k in ks:
            w = matops.matvec(S, xi_cells)
            u = matops.matvec(gb, w)
            q = xi_cells[0] * u[0]
            for i in range(1, n):
                q = q + xi_cells[i] * u[i]
            quads[k] = q
    return [d_exp(logratio * ((k + 2.0) / (n + 1.0))) * quads[k] for k in ks]


def integral_Ik(pair: MetricPair, p: PhasePoint, k: int) -> float:
    if not 0 <= k <= pair.dim - 1:
        raise ValueError("k must lie in 0..n-1")
    out = _pipeline(pair, list(p.x), list(p.xi), [k])[0]
    return float(dsl.scalar_value(out))


def integral_phase_function(pair: MetricPair, k: int) -> PhaseFunction:
    if not 0 <= k <= pair.dim - 1:
        raise ValueError("k must lie in 0..n-1")
    fn = lambda x, xi: _pipeline(pair, x, xi, [k])[0]
    return PhaseFunction(fn, pair.dim, f"I{k}[{pair.pair_id}]")


def integral_family(pair: MetricPair) -> list[PhaseFunction]:
    return [integral_phase_function(pair, k) for k in range(pair.dim)]


def integrals_at(pair: MetricPair, xs, xis) -> np.ndarray:
    """All I_k at a batch of phase points; shape (N, n)."""
    xs = np.asarray(xs, dtype=float)
    xis = np.asarray(xis, dtype=float)
    n = pair.dim
    x_cells = [xs[:, i] for i in range(n)]
    xi_cells = [xis[:, i] for i in range(n)]
    outs = _pipeline(pair, x_cells, xi_cells, list(range(n)))
    N = xs.shape[0]
    return np.stack(
        [np.broadcast_to(np.asarray(dsl.scalar_value(o), dtype=float), (N,)) for o in outs],
        axis=1,
    )


def painleve_I0(pair: MetricPair, p: PhasePoint) -> float:
    """(det g / det gbar)^{2/(n+1)} gbar(xi, xi), the classical two-dimensional
    integral in its n-dimensional form.  Equals (-1)^n integral_Ik(..., 0)."""
    return float(dsl.scalar_value(painleve_phase_function(pair).fn(list(p.x), list(p.xi))))


def painleve_phase_function(pair: MetricPair) -> PhaseFunction:
    n = pair.dim

    def fn(x, xi):
        gm = pair.g.eval_cells(x)
        gb = pair.gbar.eval_cells(x)
        logratio = matops.chol_logdet(matops.cholesky(gm)) - matops.chol_logdet(matops.cholesky(gb))
        return d_exp(logratio * (2.0 / (n + 1.0))) * matops.quadratic_form(gb, xi)

    return PhaseFunction(fn, n, f"painleve[{pair.pair_id}]")


# ---------------------------------------------------------------------------
# eigenvalue profile and Killing transfer


def eigen_profile(pair: MetricPair, x, tol: float = 1e-8) -> EigenProfile:
    """Eigenvalues of G = g^{-1} gbar, clustered at relative tolerance."""
    g = pair.g.values_at(x)
    gbar = pair.gbar.values_at(x)
    L = np.linalg.cholesky(g)
    Y = np.linalg.solve(L, gbar)
    sym = np.linalg.solve(L, Y.T).T  # L^{-1} gbar L^{-T}, symmetric similarity
    vals = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    distinct = [float(vals[0])]
    mults = [1]
    for v in vals[1:]:
        if v - distinct[-1] > tol * (1.0 + abs(v)):
            distinct.append(float(v))
            mults.append(1)
        else:
            mults[-1] += 1
    return EigenProfile(tuple(float(v) for v in vals), tuple(distinct), tuple(mults))


def transfer_killing(pair: MetricPair, covector: Sequence[Expression]) -> PhaseFunction:
    """Lift a gbar-linear integral to the g-flow.

    If F1 = sum_i a_i(x) xi^i is constant along gbar-geodesics then
    (det g / det gbar)^{1/(n+1)} F1 is constant along g-geodesics.
    """
    n = pair.dim
    if len(covector) != n:
        raise ValueError("covector needs one component per coordinate")
    names = pair.chart.names

    def fn(x, xi):
        env = dsl.eval_env(names, x)
        gm = pair.g.eval_cells(x)
        gb = pair.gbar.eval_cells(x)
        logratio = matops.chol_logdet(matops.cholesky(gm)) - matops.chol_logdet(matops.cholesky(gb))
        s = covector[0].evaluate(env) * xi[0]
        for i in range(1, n):
            s = s + covector[i].evaluate(env) * xi[i]
        return d_exp(logratio * (1.0 / (n + 1.0))) * s

    return PhaseFunction(fn, n, f"transfer[{pair.pair_id}]")


# ---------------------------------------------------------------------------
# pair-level verification wrappers


def involution_matrix(pair: MetricPair, points: Sequence[PhasePoint]) -> np.ndarray:
    return involution_matrix_for(integral_family(pair), pair.g, points)


def independence_rank(pair: MetricPair, points: Sequence[PhasePoint], rank_tol: float = 1e-8) -> int:
    return independence_rank_for(integral_family(pair), points, rank_tol)
