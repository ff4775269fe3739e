"""Integrals from the trajectorial diffeomorphism, via Pfaffian quotients.

The map Phi scales a tangent vector by |xi|_g / |xi|_gbar, so the pullback of
the gbar-canonical symplectic form along Phi is the exterior derivative of
theta_i = (|xi|_g / |xi|_gbar) gbar_{ij} xi^j dx^i.  For the pair's geodesic
flow the degree-n polynomial

    Delta(t) = Pf(Phi* omega_gbar - t omega_g) / Pf(omega_g)

factors as (t - a) delta(t) with a = |xi|_gbar / |xi|_g, and every coefficient
of the quotient delta is a first integral.  Coefficients are recovered by
sampling the Pfaffian quotient at Chebyshev nodes and solving the small
Vandermonde system, then dividing out the root a with synthetic division.

Form matrices are laid out in the basis (dx^1..dx^n, dxi^1..dxi^n) with
entry (a, b) = omega(e_a, e_b), the sign fixed so the dx-dxi block of
omega_g equals g itself.  Only the quotient of two Pfaffians ever enters, so
the overall orientation cancels; Delta is normalised to leading coefficient
+1 at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dsl, matops
from .dsl import Dual1, d_exp, d_sqrt
from .geometry import MetricField, PhasePoint
from .integrals import MetricPair, integrals_at


# ---------------------------------------------------------------------------
# pfaffian


def pfaffian(A: np.ndarray) -> float:
    """Pfaffian of a real skew-symmetric matrix.

    Skew-symmetric Gaussian elimination with pivoting; each row/column swap
    flips the sign.  The canonical block form diag([[0,1],[-1,0]], ...) has
    Pfaffian +1.  Odd dimension raises, as the Pfaffian is undefined there.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError("pfaffian needs a square matrix")
    if n % 2 != 0:
        raise ValueError("pfaffian is defined for even dimension only")
    if n == 0:
        return 1.0
    if not np.allclose(A, -A.T, atol=1e-10 * (1.0 + np.max(np.abs(A)))):
        raise ValueError("matrix is not skew-symmetric")
    val = 1.0
    for k in range(0, n - 1, 2):
        pivot = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if A[pivot, k] == 0.0:
            return 0.0
        if pivot != k + 1:
            A[[k + 1, pivot]] = A[[pivot, k + 1]]
            A[:, [k + 1, pivot]] = A[:, [pivot, k + 1]]
            val = -val
        val *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2:] / A[k, k + 1]
            col = A[k + 2:, k + 1]
            A[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return float(val)


@dataclass(frozen=True)
class FormMatrix:
    """A 2-form on phase space, stored by its strictly upper triangle so the
    full matrix is skew-symmetric by construction."""

    upper: np.ndarray  # (2n, 2n), only entries above the diagonal meaningful

    @property
    def matrix(self) -> np.ndarray:
        U = np.triu(self.upper, k=1)
        return U - U.T

    @property
    def dim(self) -> int:
        return self.upper.shape[0] // 2

    def pf(self) -> float:
        return pfaffian(self.matrix)


# ---------------------------------------------------------------------------
# canonical and pulled-back forms


def _theta_jacobians(theta_fn: Callable, n: int, p: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
    """d theta_i / dx^k and d theta_i / dxi^k by a dual pass through theta."""
    x_cells = dsl.dual1_seeds(p.x, nvars=2 * n, offset=0)
    xi_cells = dsl.dual1_seeds(p.xi, nvars=2 * n, offset=n)
    theta = theta_fn(x_cells, xi_cells)
    dx = np.zeros((n, n))
    dxi = np.zeros((n, n))
    for i, th in enumerate(theta):
        if isinstance(th, Dual1):
            dx[i] = th.grad[:n]
            dxi[i] = th.grad[n:]
    return dx, dxi


def _form_from_theta(theta_fn: Callable, n: int, p: PhasePoint) -> FormMatrix:
    dx, dxi = _theta_jacobians(theta_fn, n, p)
    upper = np.zeros((2 * n, 2 * n))
    for k in range(n):
        for i in range(k + 1, n):
            upper[k, i] = dx[k, i] - dx[i, k]  # d_i theta_k - d_k theta_i
    upper[:n, n:] = dxi  # (x_i, xi_k) block equals d theta_i / dxi^k
    return FormMatrix(upper)


def omega_g_at(metric: MetricField, p: PhasePoint) -> FormMatrix:
    """Canonical symplectic form of the metric, d[g_{ij} xi^j dx^i], with the
    dx-dxi block equal to g."""
    n = metric.dim

    def theta(x, xi):
        return matops.matvec(metric.eval_cells(x), xi)

    return _form_from_theta(theta, n, p)


def _pullback_theta(pair: MetricPair):
    n = pair.dim

    def theta(x, xi):
        gm = pair.g.eval_cells(x)
        gb = pair.gbar.eval_cells(x)
        ng = d_sqrt(matops.quadratic_form(gm, xi))
        nb = d_sqrt(matops.quadratic_form(gb, xi))
        scalefac = ng / nb
        w = matops.matvec(gb, xi)
        return [scalefac * wi for wi in w]

    return theta


def pullback_phi_omega(pair: MetricPair, p: PhasePoint) -> FormMatrix:
    """Pullback of omega_gbar along the trajectorial diffeomorphism
    Phi(x, xi) = (x, xi |xi|_g / |xi|_gbar)."""
    return _form_from_theta(_pullback_theta(pair), pair.dim, p)


def a_scalar(pair: MetricPair, p: PhasePoint) -> float:
    """a = |xi|_gbar / |xi|_g, the factored root of Delta."""
    ng = pair.g.norm(p.x, p.xi)
    nb = pair.gbar.norm(p.x, p.xi)
    if ng == 0.0 or nb == 0.0:
        raise ValueError("zero tangent vector has no norm ratio")
    return nb / ng


# ---------------------------------------------------------------------------
# polynomial machinery


@dataclass(frozen=True)
class PolyCoeffs:
    """Real polynomial, coefficients in descending powers."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) > 1 and self.coeffs[0] == 0.0:
            raise ValueError("leading coefficient must be nonzero")

    def __getitem__(self, i: int) -> float:
        return self.coeffs[i]

    def __len__(self) -> int:
        return len(self.coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t: float) -> float:
        acc = 0.0
        for c in self.coeffs:
            acc = acc * t + c
        return acc

    def ascending(self) -> tuple[float, ...]:
        """Coefficients (b_0, b_1, ..., b_deg) by ascending power."""
        return tuple(reversed(self.coeffs))


def horner_divide(coeffs, root: float) -> tuple[PolyCoeffs, float]:
    """Synthetic division by (t - root): returns quotient and remainder."""
    cs = list(coeffs.coeffs if isinstance(coeffs, PolyCoeffs) else coeffs)
    if len(cs) < 2:
        raise ValueError("cannot divide a constant polynomial")
    q = [cs[0]]
    for c in cs[1:-1]:
        q.append(c + root * q[-1])
    rem = cs[-1] + root * q[-1]
    return PolyCoeffs(tuple(float(v) for v in q)), float(rem)


def delta_poly(pair: MetricPair, p: PhasePoint) -> PolyCoeffs:
    """Coefficients of Delta(t) = Pf(Phi* omega_gbar - t omega_g)/Pf(omega_g),
    normalised to leading coefficient +1.

    The quotient is a degree-n polynomial in t; it is recovered exactly (up to
    rounding) from n+1 samples at Chebyshev nodes scaled to the root's
    magnitude, via a Vandermonde solve.
    """
    n = pair.dim
    omega = omega_g_at(pair.g, p).matrix
    pulled = pullback_phi_omega(pair, p).matrix
    pf_omega = pfaffian(omega.copy())
    if pf_omega == 0.0:
        raise ValueError("canonical form is degenerate at this point")
    radius = 1.0 + abs(a_scalar(pair, p))
    nodes = radius * np.cos(np.pi * (2 * np.arange(n + 1) + 1) / (2.0 * (n + 1)))
    samples = np.array([pfaffian(pulled - t * omega) / pf_omega for t in nodes])
    V = np.vander(nodes, n + 1)  # descending powers
    coeffs = np.linalg.solve(V, samples)
    coeffs = coeffs / coeffs[0]
    return PolyCoeffs(tuple(float(c) for c in coeffs))


@dataclass(frozen=True)
class RankOneData:
    """Principal-axes data of the dxi-block: diag(mu) minus the rank-one
    update outer(A, B)."""

    mu: tuple[float, ...]
    A: tuple[float, ...]
    B: tuple[float, ...]


def rank_one_data(rho: Sequence[float], xi: Sequence[float]) -> RankOneData:
    """Build the principal-axes data for g = identity, gbar = diag(rho)."""
    rho = np.asarray(rho, dtype=float)
    xi = np.asarray(xi, dtype=float)
    ng = float(np.sqrt(np.sum(xi * xi)))
    nb = float(np.sqrt(np.sum(rho * xi * xi)))
    if ng == 0.0 or nb == 0.0:
        raise ValueError("zero tangent vector")
    mu = -rho * ng / nb
    A = rho * xi
    B = (nb / ng - rho * ng / nb) / (nb * nb) * xi
    return RankOneData(tuple(mu), tuple(A), tuple(B))


def rank_one_delta(d: RankOneData, t: float) -> float:
    """det(diag(t + mu) - outer(A, B)) expanded along the rank-one update:
    prod(t + mu_i) - sum_i A_i B_i prod_{j != i}(t + mu_j)."""
    mu = np.asarray(d.mu, dtype=float)
    ab = np.asarray(d.A, dtype=float) * np.asarray(d.B, dtype=float)
    full = np.prod(t + mu)
    total = full
    for i in range(len(mu)):
        others = np.prod(np.delete(t + mu, i))
        total -= ab[i] * others
    return float(total)


@dataclass(frozen=True)
class FactoryIntegrals:
    """Quotient coefficients delta(t) = Delta(t)/(t - a) plus the division
    remainder; the remainder vanishes exactly when a is a root of Delta."""

    coeffs: PolyCoeffs
    remainder: float
    a: float
    delta: PolyCoeffs


def factory_integrals(pair: MetricPair, p: PhasePoint) -> FactoryIntegrals:
    delta = delta_poly(pair, p)
    a = a_scalar(pair, p)
    q, rem = horner_divide(delta, a)
    return FactoryIntegrals(q, rem, a, delta)


def coeffs_from_closed_form(pair: MetricPair, p: PhasePoint) -> np.ndarray:
    """Predict the quotient coefficients from the I_k family.

    The per-coefficient conversion (derived from the rank-one determinant by
    synthetic division, valid at every phase point):

        b_{n-1-k} = (-1)^n (det gbar / det g)^{(k+2)/(n+1)} I_k
                    / (a^{k+2} g(xi, xi)),   k = 0..n-1,

    returned in descending powers to match factory_integrals().coeffs.
    """
    n = pair.dim
    Ik = integrals_at(pair, p.x[None, :], p.xi[None, :])[0]
    a = a_scalar(pair, p)
    det_g = float(np.linalg.det(pair.g.values_at(p.x)))
    det_gb = float(np.linalg.det(pair.gbar.values_at(p.x)))
    gxx = pair.g.norm(p.x, p.xi) ** 2
    sign = (-1.0) ** n
    b_desc = np.empty(n)
    for k in range(n):
        ratio = (det_gb / det_g) ** ((k + 2.0) / (n + 1.0))
        b_desc[k] = sign * ratio * Ik[k] / (a ** (k + 2) * gxx)
    return b_desc
