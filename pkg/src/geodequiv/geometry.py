"""Charts, metric fields, geodesics and curve comparison utilities."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import dsl, matops
from .dsl import Dual1, Dual2, Expression, eval_env, parse


class ChartDomainError(ValueError):
    pass


class EnergyDriftError(RuntimeError):
    def __init__(self, drift: float, tol: float):
        self.drift = drift
        super().__init__(f"relative energy drift {drift:.3e} exceeds tolerance {tol:.3e}")


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Chart:
    """A named coordinate chart.

    domain, when present, is an expression over the coordinates; a point lies
    inside the chart iff the expression evaluates to a positive number.
    domain_factors is the conjunction form of the same predicate (all factors
    positive): products of factors change sign twice across a corner where
    two factors flip at once, so domain tests and the integration exit event
    prefer the factor list when it is available.  When only the factors are
    given, domain is derived as their product.
    sample_box gives per-coordinate (lo, hi) ranges used for seeded sampling
    and positivity spot checks.
    """

    names: tuple[str, ...]
    domain: Expression | None = None
    sample_box: tuple[tuple[float, float], ...] | None = None
    domain_factors: tuple[Expression, ...] | None = None

    def __post_init__(self):
        if len(self.names) < 1:
            raise ValueError("chart needs at least one coordinate")
        if len(set(self.names)) != len(self.names):
            raise ValueError("chart coordinate names must be distinct")
        if self.domain_factors is not None:
            for f in self.domain_factors:
                if not f.variables() <= set(self.names):
                    raise ValueError("domain factor references undeclared coordinates")
            if self.domain is None:
                prod = self.domain_factors[0]
                for f in self.domain_factors[1:]:
                    prod = dsl.Mul(prod, f)
                object.__setattr__(self, "domain", prod)
        if self.domain is not None and not self.domain.variables() <= set(self.names):
            raise ValueError("domain expression references undeclared coordinates")
        if self.sample_box is not None and len(self.sample_box) != len(self.names):
            raise ValueError("sample_box must give one interval per coordinate")

    @property
    def dim(self) -> int:
        return len(self.names)

    def domain_margin(self, x) -> float:
        """Signed distance proxy: the smallest factor value (or the domain
        expression itself), positive inside the chart."""
        env = eval_env(self.names, list(np.asarray(x, dtype=float)))
        if self.domain_factors is not None:
            return min(float(np.min(np.asarray(f.evaluate(env)))) for f in self.domain_factors)
        if self.domain is None:
            return np.inf
        return float(np.min(np.asarray(self.domain.evaluate(env))))

    def contains(self, x, slack: float = 0.0) -> bool:
        if self.domain is None:
            return True
        return self.domain_margin(x) > -slack

    def parse(self, src: str) -> Expression:
        return parse(src, self.names)

    def box_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Sample points uniformly from sample_box, rejecting the outside of
        the domain predicate."""
        if self.sample_box is None:
            raise ValueError("chart has no sample_box configured")
        lo = np.array([b[0] for b in self.sample_box])
        hi = np.array([b[1] for b in self.sample_box])
        out = []
        tries = 0
        while len(out) < count:
            x = lo + (hi - lo) * rng.random(self.dim)
            tries += 1
            if tries > 1000 * count:
                raise ChartDomainError("rejection sampling failed to hit the chart domain")
            if self.contains(x):
                out.append(x)
        return np.array(out)


@dataclass
class PhasePoint:
    """Base point and tangent vector.  Zero tangents are rejected everywhere
    downstream (the trajectorial diffeomorphism is undefined there), so they
    are refused at construction time."""

    x: np.ndarray
    xi: np.ndarray

    def __init__(self, x, xi):
        self.x = np.asarray(x, dtype=float).copy()
        self.xi = np.asarray(xi, dtype=float).copy()
        if self.x.shape != self.xi.shape or self.x.ndim != 1:
            raise ValueError("x and xi must be vectors of equal length")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.xi))):
            raise ValueError("phase point must be finite")
        if float(np.linalg.norm(self.xi)) == 0.0:
            raise ValueError("zero tangent vector is not an admissible phase point")

    @property
    def dim(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class MetricAt:
    """Pointwise metric data: Dual2 entries plus a Cholesky factor of the
    value matrix."""

    entries: np.ndarray  # (n, n) object array of Dual2
    values: np.ndarray  # (n, n) float
    chol: np.ndarray  # (n, n) float lower triangular

    def gradient(self) -> np.ndarray:
        n = self.values.shape[0]
        out = np.empty((n, n, n))
        for i in range(n):
            for j in range(n):
                out[i, j, :] = self.entries[i, j].grad
        return out

    def hessian(self) -> np.ndarray:
        n = self.values.shape[0]
        out = np.empty((n, n, n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = self.entries[i, j].hess
        return out


class MetricField:
    """Symmetric metric tensor with expression entries (upper triangle stored)."""

    def __init__(self, chart: Chart, upper: Sequence[Sequence[Expression]]):
        n = chart.dim
        if len(upper) != n or any(len(row) != n - i for i, row in enumerate(upper)):
            raise ValueError("upper must be the upper triangle, row i holding entries (i, i..n-1)")
        for row in upper:
            for e in row:
                if not e.variables() <= set(chart.names):
                    raise ValueError("metric entry references undeclared coordinates")
        self.chart = chart
        self.upper = tuple(tuple(row) for row in upper)

    @staticmethod
    def from_strings(chart: Chart, grid: Sequence[Sequence[str]]) -> "MetricField":
        """Build from a full square grid of DSL strings; the strictly lower
        triangle is ignored (symmetry is by construction)."""
        n = chart.dim
        upper = [[chart.parse(grid[i][j]) for j in range(i, n)] for i in range(n)]
        return MetricField(chart, upper)

    @staticmethod
    def from_diagonal(chart: Chart, diag: Sequence[Expression]) -> "MetricField":
        n = chart.dim
        zero = dsl.Lit(0.0)
        upper = [[diag[i] if j == i else zero for j in range(i, n)] for i in range(n)]
        return MetricField(chart, upper)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def entry(self, i: int, j: int) -> Expression:
        if j < i:
            i, j = j, i
        return self.upper[i][j - i]

    def entry_grid(self) -> list[list[Expression]]:
        n = self.dim
        return [[self.entry(i, j) for j in range(n)] for i in range(n)]

    def eval_cells(self, cells: Sequence) -> np.ndarray:
        """Evaluate entries over scalar-like coordinate cells.  Both triangles
        share the same evaluated object, keeping symmetry exact."""
        n = self.dim
        env = eval_env(self.chart.names, cells)
        out = np.empty((n, n), dtype=object)
        for i in range(n):
            for k, e in enumerate(self.upper[i]):
                v = e.evaluate(env)
                out[i, i + k] = v
                out[i + k, i] = v
        return out

    def values_at(self, x) -> np.ndarray:
        return matops.values_matrix(self.eval_cells(list(np.asarray(x, dtype=float))))

    def metric_at(self, x) -> MetricAt:
        x = np.asarray(x, dtype=float)
        n = self.dim
        cells = self.eval_cells(dsl.dual2_seeds(x))
        for i in range(n):
            for j in range(n):
                if not isinstance(cells[i, j], Dual2):
                    cells[i, j] = Dual2(float(cells[i, j]), np.zeros(n), np.zeros((n, n)))
        vals = matops.values_matrix(cells)
        try:
            chol = np.linalg.cholesky(vals)
        except np.linalg.LinAlgError:
            minor = _failing_minor(vals)
            raise matops.NotPositiveDefiniteError(minor, f"at x = {x.tolist()}")
        return MetricAt(cells, vals, chol)

    def values_and_grads(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Batched values and coordinate gradients of the entries.

        xs has shape (N, n); returns (N, n, n) values and (N, n, n, n) grads
        with the derivative index last.
        """
        xs = np.asarray(xs, dtype=float)
        squeeze = xs.ndim == 1
        if squeeze:
            xs = xs[None, :]
        n = self.dim
        N = xs.shape[0]
        cells = self.eval_cells(dsl.dual1_seeds(xs))
        vals = np.empty((N, n, n))
        grads = np.zeros((N, n, n, n))
        for i in range(n):
            for j in range(n):
                c = cells[i, j]
                if isinstance(c, Dual1):
                    vals[:, i, j] = np.broadcast_to(np.asarray(c.value), (N,))
                    grads[:, i, j, :] = np.broadcast_to(np.asarray(c.grad), (N, n))
                else:
                    vals[:, i, j] = np.broadcast_to(np.asarray(c, dtype=float), (N,))
        if squeeze:
            return vals[0], grads[0]
        return vals, grads

    def check_positive_definite(self, samples: int = 32, seed: int = 0) -> None:
        """Cholesky spot check over the chart's sample box."""
        rng = np.random.default_rng(seed)
        for x in self.chart.box_points(samples, rng):
            self.metric_at(x)

    def norm(self, x, xi) -> float:
        g = self.values_at(x)
        xi = np.asarray(xi, dtype=float)
        return float(np.sqrt(xi @ g @ xi))


def _failing_minor(vals: np.ndarray) -> int:
    n = vals.shape[0]
    for k in range(1, n + 1):
        if np.linalg.det(vals[:k, :k]) <= 0.0:
            return k
    return n


# ---------------------------------------------------------------------------
# Christoffel symbols and geodesics


def christoffel(metric: MetricField, x) -> np.ndarray:
    """Gamma[k, i, j] = 1/2 g^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij})."""
    vals, grads = metric.values_and_grads(np.asarray(x, dtype=float))
    return _christoffel_from(vals, grads)


def _christoffel_from(vals: np.ndarray, grads: np.ndarray) -> np.ndarray:
    # grads[..., i, j, k] = d_k g_{ij}
    # Build source S[l, i, j] = d_i g_{jl} + d_j g_{il} - d_l g_{ij}
    di_gjl = np.einsum("...jli->...lij", grads)
    dj_gil = np.einsum("...ilj->...lij", grads)
    dl_gij = np.einsum("...ijl->...lij", grads)
    S = di_gjl + dj_gil - dl_gij
    n = vals.shape[-1]
    flat = S.reshape(S.shape[:-2] + (n * n,))
    sol = np.linalg.solve(vals, flat)
    return 0.5 * sol.reshape(S.shape)


def geodesic_rhs(metric: MetricField, x, xi) -> tuple[np.ndarray, np.ndarray]:
    gamma = christoffel(metric, x)
    acc = -np.einsum("kij,i,j->k", gamma, xi, xi)
    return np.asarray(xi, dtype=float), acc


@dataclass
class GeodesicOptions:
    rtol: float = 1e-10
    atol: float = 1e-10
    energy_tol: float = 1e-8
    samples: int = 201
    max_step: float = np.inf


@dataclass
class Trajectory:
    """Sampled solution of the geodesic equations for one metric."""

    metric: MetricField
    ts: np.ndarray
    xs: np.ndarray  # (K, n)
    xis: np.ndarray  # (K, n)
    left_domain: bool = False
    energy_drift: float = 0.0

    def __post_init__(self):
        self.ts = np.asarray(self.ts, dtype=float)
        self.xs = np.asarray(self.xs, dtype=float)
        self.xis = np.asarray(self.xis, dtype=float)
        if not np.all(np.diff(self.ts) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        chart = self.metric.chart
        if chart.domain is not None:
            for x in self.xs:
                if not chart.contains(x, slack=1e-9):
                    raise ChartDomainError(f"trajectory sample {x.tolist()} left the chart domain")

    def __len__(self) -> int:
        return self.ts.shape[0]

    def point(self, k: int) -> PhasePoint:
        return PhasePoint(self.xs[k], self.xis[k])

    def energies(self) -> np.ndarray:
        g = _batch_values(self.metric, self.xs)
        return np.einsum("kij,ki,kj->k", g, self.xis, self.xis)


def _batch_values(metric: MetricField, xs: np.ndarray) -> np.ndarray:
    cells = metric.eval_cells([xs[:, i] for i in range(metric.dim)])
    vals = matops.values_matrix(cells)
    if vals.ndim == 2:  # all entries constant
        vals = np.broadcast_to(vals, (xs.shape[0],) + vals.shape)
    return vals


def integrate_geodesic(
    metric: MetricField,
    p0: PhasePoint,
    t_end: float,
    opts: GeodesicOptions | None = None,
) -> Trajectory:
    """Integrate the geodesic flow from p0 with an embedded RK 5(4) scheme.

    Leaving the chart domain is a soft stop: the trajectory is truncated at
    the crossing and flagged.  A relative energy drift above opts.energy_tol
    raises EnergyDriftError.
    """
    opts = opts or GeodesicOptions()
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    chart = metric.chart
    if not chart.contains(p0.x):
        raise ChartDomainError(f"initial point {p0.x.tolist()} is outside the chart domain")
    n = metric.dim

    def rhs(t, y):
        x, xi = y[:n], y[n:]
        vals, grads = metric.values_and_grads(x)
        gamma = _christoffel_from(vals, grads)
        return np.concatenate([xi, -np.einsum("kij,i,j->k", gamma, xi, xi)])

    events = None
    if chart.domain is not None:
        def exit_event(t, y):
            return chart.domain_margin(y[:n])

        exit_event.terminal = True
        exit_event.direction = -1
        events = [exit_event]

    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        np.concatenate([p0.x, p0.xi]),
        method="RK45",
        rtol=opts.rtol,
        atol=opts.atol,
        events=events,
        max_step=opts.max_step,
        dense_output=True,
    )
    if sol.status == -1:
        raise IntegrationError(f"geodesic integration failed: {sol.message}")
    left = sol.status == 1
    t_reached = float(sol.t_events[0][-1]) if left else float(sol.t[-1])
    if t_reached <= 0.0:
        raise IntegrationError("trajectory left the chart domain immediately")
    # resample the dense interpolant uniformly over the span actually covered,
    # so early chart exits do not thin out the returned curve
    ts = np.linspace(0.0, t_reached, max(2, opts.samples))
    ys = sol.sol(ts).T
    if left:
        ys[-1] = sol.y_events[0][-1]
    traj = Trajectory(metric, ts, ys[:, :n], ys[:, n:], left_domain=left)
    E = traj.energies()
    drift = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))
    traj.energy_drift = drift
    if drift > opts.energy_tol:
        raise EnergyDriftError(drift, opts.energy_tol)
    return traj


def integrate_geodesics_batch(
    metric: MetricField,
    points: Sequence[PhasePoint],
    t_end: float,
    opts: GeodesicOptions | None = None,
) -> list[Trajectory]:
    """Integrate many geodesics of one metric as a single stacked system.

    Only valid for charts without a domain predicate (no per-trajectory exit
    events).  Error control applies to the stacked state, which is at least
    as strict per trajectory up to the RMS norm mixing.
    """
    opts = opts or GeodesicOptions()
    chart = metric.chart
    if chart.domain is not None:
        return [integrate_geodesic(metric, p, t_end, opts) for p in points]
    n = metric.dim
    B = len(points)
    y0 = np.concatenate([np.concatenate([p.x, p.xi]) for p in points])

    def rhs(t, y):
        z = y.reshape(B, 2 * n)
        xs, xis = z[:, :n], z[:, n:]
        vals, grads = metric.values_and_grads(xs)
        gamma = _christoffel_from(vals, grads)
        acc = -np.einsum("bkij,bi,bj->bk", gamma, xis, xis)
        return np.concatenate([xis, acc], axis=1).reshape(-1)

    t_eval = np.linspace(0.0, t_end, max(2, opts.samples))
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        y0,
        method="RK45",
        rtol=opts.rtol,
        atol=opts.atol,
        t_eval=t_eval,
    )
    if not sol.success:
        raise IntegrationError(f"batched geodesic integration failed: {sol.message}")
    out = []
    ys = sol.y.T.reshape(len(sol.t), B, 2 * n)
    for b in range(B):
        traj = Trajectory(metric, sol.t, ys[:, b, :n], ys[:, b, n:])
        E = traj.energies()
        drift = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))
        traj.energy_drift = drift
        if drift > opts.energy_tol:
            raise EnergyDriftError(drift, opts.energy_tol)
        out.append(traj)
    return out


# ---------------------------------------------------------------------------
# arc length and curve comparison


def arclength_reparam(
    traj: Trajectory,
    metric: MetricField,
    count: int = 256,
    length: float | None = None,
) -> np.ndarray:
    """Resample the base curve at `count` points equally spaced in the arc
    length measured by `metric` (not necessarily the generating one).  With
    `length` given, only the initial piece of that arc length is kept."""
    g = _batch_values(metric, traj.xs)
    speed = np.sqrt(np.einsum("kij,ki,kj->k", g, traj.xis, traj.xis))
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(traj.ts))])
    total = s[-1]
    if total <= 0:
        raise ValueError("curve has zero arc length")
    if length is not None:
        total = min(total, float(length))
    targets = np.linspace(0.0, total, count)
    out = np.empty((count, traj.xs.shape[1]))
    for j in range(traj.xs.shape[1]):
        out[:, j] = np.interp(targets, s, traj.xs[:, j])
    return out


def arc_length(traj: Trajectory, metric: MetricField) -> float:
    g = _batch_values(metric, traj.xs)
    speed = np.sqrt(np.einsum("kij,ki,kj->k", g, traj.xis, traj.xis))
    return float(np.sum(0.5 * (speed[1:] + speed[:-1]) * np.diff(traj.ts)))


def curve_distance(c1: np.ndarray, c2: np.ndarray) -> float:
    """One-sided distance: max over points of c1 of the Euclidean-in-chart
    distance to the piecewise linear interpolation of c2.

    The search first scans a band of segments around the index-aligned
    position (curves compared here are resampled over a common arc-length
    grid, so near-coincident curves stay index-aligned); any point whose
    banded distance is not already negligible gets an exact pass over all
    segments, keeping the result the true max-min distance.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if len(c2) == 1:
        return float(np.max(np.linalg.norm(c1 - c2[0], axis=1)))
    a = c2[:-1]  # (M, n) segment starts
    d = c2[1:] - a  # (M, n)
    dd = np.einsum("mj,mj->m", d, d)
    dd = np.where(dd == 0.0, 1.0, dd)
    M, P = len(a), len(c1)

    best = np.full(P, np.inf)
    base = np.minimum((np.arange(P) * (M / max(P - 1, 1))).astype(np.int64), M - 1)
    for k in range(-64, 65):
        j = np.clip(base + k, 0, M - 1)
        w = c1 - a[j]
        t = np.clip(np.einsum("pj,pj->p", w, d[j]) / dd[j], 0.0, 1.0)
        diff = w - t[:, None] * d[j]
        np.minimum(best, np.einsum("pj,pj->p", diff, diff), out=best)

    hard = np.flatnonzero(best > 1e-8)  # banded distance above 1e-4
    for lo in range(0, hard.size, 512):
        rows = hard[lo:lo + 512]
        w = c1[rows][:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pmj,mj->pm", w, d) / dd, 0.0, 1.0)
        diff = w - t[..., None] * d[None, :, :]
        best[rows] = np.min(np.einsum("pmj,pmj->pm", diff, diff), axis=1)
    return float(np.sqrt(np.max(best)))


def symmetric_curve_distance(c1: np.ndarray, c2: np.ndarray) -> float:
    return max(curve_distance(c1, c2), curve_distance(c2, c1))


def geodesic_coincidence(
    g: MetricField,
    gbar: MetricField,
    p0: PhasePoint,
    length: float = 5.0,
    count: int = 2048,
    opts: GeodesicOptions | None = None,
) -> float:
    """Symmetrized distance between the g- and gbar-geodesics launched from
    the same base point and direction, compared as unparameterized curves
    over the initial piece of g-arc-length `length` (shorter when either
    trajectory leaves the chart first).

    Near zero exactly when the two metrics share their geodesics through p0.
    The defaults sample densely enough that the piecewise-linear comparison
    resolves distances down to about 1e-6 over length 5, including near
    chart walls where the coordinate curvature of the curves grows; the
    integrator tolerance is relaxed accordingly, since curve positions only
    need to be accurate well below the comparison's discretization floor.
    """
    if opts is None:
        opts = GeodesicOptions(rtol=1e-8, atol=1e-8, samples=3001, energy_tol=1e-5)
    x0 = p0.x
    v = p0.xi / g.norm(x0, p0.xi)
    tg = integrate_geodesic(g, PhasePoint(x0, v), float(length), opts)
    vb = p0.xi / gbar.norm(x0, p0.xi)
    # unit gbar-speed does not cover g-arc-length at unit rate; extend the
    # integration window until the g-length target is reached or the chart ends
    t_end = float(length)
    tb = integrate_geodesic(gbar, PhasePoint(x0, vb), t_end, opts)
    for _ in range(8):
        if tb.left_domain or arc_length(tb, g) >= length:
            break
        covered = arc_length(tb, g)
        t_end *= max(1.5, 1.2 * float(length) / max(covered, 1e-12))
        tb = integrate_geodesic(gbar, PhasePoint(x0, vb), t_end, opts)
    window = min(float(length), arc_length(tg, g), arc_length(tb, g))
    c1 = arclength_reparam(tg, g, count, length=window)
    c2 = arclength_reparam(tb, g, count, length=window)
    return symmetric_curve_distance(c1, c2)


# ---------------------------------------------------------------------------
# export


def trajectory_to_csv(traj: Trajectory) -> str:
    n = traj.xs.shape[1]
    header = "t," + ",".join(f"x{i+1}" for i in range(n)) + "," + ",".join(
        f"xi{i+1}" for i in range(n)
    )
    buf = io.StringIO()
    buf.write(header + "\n")
    for k in range(len(traj)):
        row = [traj.ts[k], *traj.xs[k], *traj.xis[k]]
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def trajectory_to_json(traj: Trajectory) -> str:
    n = traj.xs.shape[1]
    cols = ["t"] + [f"x{i+1}" for i in range(n)] + [f"xi{i+1}" for i in range(n)]
    rows = [
        [float(traj.ts[k]), *map(float, traj.xs[k]), *map(float, traj.xis[k])]
        for k in range(len(traj))
    ]
    return json.dumps({"columns": cols, "rows": rows, "left_domain": traj.left_domain})
