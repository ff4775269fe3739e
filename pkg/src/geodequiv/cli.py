"""Command line front end: configuration ingestion, experiment orchestration,
and report emission.

Subcommands
    verify             conservation / involution / independence suite on a pair
    factory            per-point quotient coefficients, remainders, cross-checks
    geodesic           trajectory export plus both-metric curve comparison
    levi-civita-build  emit a metric-pair config from a normal-form config
    catalog            list built-in pair names

Exit codes are a stable contract: 0 all checks passed, 1 a numerical
check failed, 2 usage or configuration error.  Reports are deterministic
for a fixed config and seed up to the "timestamp" field: per-point results
are aggregated in point_id order no matter how the worker pool schedules
them, and the JSON is emitted with sorted keys.  The environment variable
GEODEQUIV_THREADS caps the worker pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dsl import DslError
from .factory import coeffs_from_closed_form, factory_integrals
from .geometry import (
    Chart,
    GeodesicOptions,
    MetricField,
    PhasePoint,
    arc_length,
    geodesic_coincidence,
    integrate_geodesic,
    trajectory_to_csv,
    trajectory_to_json,
)
from .hamilton import conservation_drift
from .integrals import (
    MetricPair,
    eigen_profile,
    independence_rank,
    integral_family,
    involution_matrix,
)
from .levicivita import build_pair, lcspec_from_json
from .catalog import battery, resolve_pair

# fixed thresholds for the factory cross-checks (the command reports the
# measured values; these only decide the exit code)
FACTORY_REMAINDER_TOL = 1e-8
FACTORY_CROSSCHECK_TOL = 1e-8


class ConfigError(ValueError):
    """Bad usage or configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    """One experiment: a pair source plus sampling sizes and tolerances.

    pair is either a catalog name (see resolve_pair) or an inline object
    with keys "coordinates", optional "box"/"domain"/"id", and metric
    entries as DSL strings keyed "g[i][j]" and "gbar[i][j]" (1-based,
    upper triangle suffices).
    """

    pair: str | dict
    seed: int = 0
    drift_tol: float = 1e-6
    bracket_tol: float = 1e-8
    rank_tol: float = 1e-8
    trajectories: int = 20
    t_end: float = 5.0
    points: int = 100
    out_format: str = "json"
    out: str | None = None

    def __post_init__(self):
        for name in ("drift_tol", "bracket_tol", "rank_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.trajectories < 1:
            raise ConfigError("trajectory count must be at least 1")
        if self.points < 1:
            raise ConfigError("sample-point count must be at least 1")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if self.out_format not in ("json", "csv"):
            raise ConfigError(f"unknown output format {self.out_format!r}")
        self.seed = int(self.seed)


_CONFIG_KEYS = {
    "pair": "pair",
    "seed": "seed",
    "drift_tol": "drift_tol",
    "bracket_tol": "bracket_tol",
    "rank_tol": "rank_tol",
    "trajectories": "trajectories",
    "t_end": "t_end",
    "points": "points",
    "format": "out_format",
    "out": "out",
}


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional --config JSON document with command line flags;
    flags win.  Raises ConfigError with the offending path or key."""
    doc: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
        unknown = set(doc) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"config {args.config}: unknown keys {sorted(unknown)}")
    kwargs = {_CONFIG_KEYS[k]: v for k, v in doc.items()}
    for flag, attr in [
        ("pair", "pair"),
        ("seed", "seed"),
        ("tol_drift", "drift_tol"),
        ("tol_bracket", "bracket_tol"),
        ("t_end", "t_end"),
        ("trajectories", "trajectories"),
        ("points", "points"),
        ("format", "out_format"),
        ("out", "out"),
    ]:
        v = getattr(args, flag, None)
        if v is not None:
            kwargs[attr] = v
    if "pair" not in kwargs:
        raise ConfigError("no pair given: use --pair or a config with a pair entry")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))


def pair_from_inline(doc: dict) -> MetricPair:
    """Build a MetricPair from the inline config object form."""
    unknown = set(doc) - {"id", "coordinates", "box", "domain"}
    bad = [k for k in unknown if not (k.startswith("g[") or k.startswith("gbar["))]
    if bad:
        raise ConfigError(f"inline pair: unknown keys {sorted(bad)}")
    try:
        names = tuple(str(c) for c in doc["coordinates"])
    except (KeyError, TypeError):
        raise ConfigError('inline pair needs a "coordinates" list')
    box = None
    if doc.get("box") is not None:
        box = tuple((float(lo), float(hi)) for lo, hi in doc["box"])
    else:
        box = tuple((-1.0, 1.0) for _ in names)
    chart = Chart(names, sample_box=box)
    if doc.get("domain") is not None:
        chart = Chart(names, domain=chart.parse(str(doc["domain"])), sample_box=box)

    n = len(names)

    def grid_for(prefix: str) -> list[list[str]]:
        grid = [["0"] * n for _ in range(n)]
        seen = False
        for key, src in doc.items():
            if not key.startswith(prefix + "["):
                continue
            try:
                i, j = (int(p) for p in key[len(prefix):].strip("[]").split("]["))
            except ValueError:
                raise ConfigError(f"inline pair: malformed metric key {key!r}")
            if not (1 <= i <= n and 1 <= j <= n):
                raise ConfigError(f"inline pair: index out of range in {key!r}")
            grid[i - 1][j - 1] = str(src)
            grid[j - 1][i - 1] = str(src)
            seen = True
        if not seen:
            raise ConfigError(f'inline pair: no "{prefix}[i][j]" entries found')
        return grid

    try:
        g = MetricField.from_strings(chart, grid_for("g"))
        gbar = MetricField.from_strings(chart, grid_for("gbar"))
    except DslError as exc:
        raise ConfigError(f"inline pair: bad metric entry: {exc}")
    return MetricPair(g, gbar, pair_id=str(doc.get("id", "inline")))


def resolve_config_pair(source: str | dict) -> MetricPair:
    if isinstance(source, dict):
        return pair_from_inline(source)
    try:
        return resolve_pair(str(source))
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"cannot resolve pair {source!r}: {exc}")


# ---------------------------------------------------------------------------
# sampling and the worker pool


def sample_phase_points(
    pair: MetricPair, count: int, rng: np.random.Generator
) -> list[PhasePoint]:
    """Draw base points uniformly from the chart's sample box (respecting the
    domain predicate) and directions uniformly from the unit g-sphere."""
    xs = pair.g.chart.box_points(count, rng)
    out = []
    for x in xs:
        xi = rng.standard_normal(pair.dim)
        while float(np.linalg.norm(xi)) < 1e-12:
            xi = rng.standard_normal(pair.dim)
        out.append(PhasePoint(x, xi / pair.g.norm(x, xi)))
    return out


def _max_workers(n_jobs: int) -> int:
    cap = os.environ.get("GEODEQUIV_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_jobs, limit))


def _pmap(fn, jobs: list) -> list:
    """Run fn over the jobs on the worker pool, returning results in job
    order regardless of completion order."""
    if len(jobs) <= 1 or _max_workers(len(jobs)) == 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=_max_workers(len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _finite(v) -> float:
    return float(v)


def _report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# verify


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    """Conservation of every integral along seeded geodesics, pairwise
    brackets at seeded phase points, and the independence rank."""
    pair = resolve_config_pair(cfg.pair)
    rng = np.random.default_rng(cfg.seed)
    family = integral_family(pair)
    starts = sample_phase_points(pair, cfg.trajectories, rng)
    # the integrator's own energy self-check runs looser than the conservation
    # tolerance: near chart walls RK45 at 1e-10 legitimately accumulates ~1e-8
    # relative energy error, which the drift check judges, not the gate
    opts = GeodesicOptions(energy_tol=1e-7)

    def one_trajectory(job):
        pid, p0 = job
        traj = integrate_geodesic(pair.g, p0, cfg.t_end, opts)
        drifts = [conservation_drift(F, traj) for F in family]
        return {
            "point_id": pid,
            "drift": [_finite(d) for d in drifts],
            "energy_drift": _finite(traj.energy_drift),
            "left_domain": bool(traj.left_domain),
            "t_reached": _finite(traj.ts[-1]),
        }

    rows = _pmap(one_trajectory, list(enumerate(starts)))
    rows.sort(key=lambda r: r["point_id"])
    drift_max = max(max(r["drift"]) for r in rows)

    phase = sample_phase_points(pair, cfg.points, rng)
    brackets = involution_matrix(pair, phase)
    offdiag = brackets - np.diag(np.diag(brackets))
    bracket_max = float(np.max(np.abs(offdiag)))
    diag_max = float(np.max(np.abs(np.diag(brackets))))

    profiles = [eigen_profile(pair, p.x) for p in phase[: min(5, len(phase))]]
    m_required = max(pr.m for pr in profiles)
    rank = independence_rank(pair, phase, rank_tol=cfg.rank_tol)

    checks = [
        {"name": "conservation", "value": drift_max, "tol": cfg.drift_tol,
         "pass": drift_max <= cfg.drift_tol},
        {"name": "involution", "value": bracket_max, "tol": cfg.bracket_tol,
         "pass": bracket_max <= cfg.bracket_tol},
        {"name": "involution-diagonal", "value": diag_max, "tol": 0.0,
         "pass": diag_max == 0.0},
        {"name": "independence-rank", "value": float(rank), "tol": float(m_required),
         "pass": rank >= m_required},
    ]
    violations = [c["name"] for c in checks if not c["pass"]]
    report = {
        "command": "verify",
        "pair": pair.pair_id,
        "dim": pair.dim,
        "seed": cfg.seed,
        "tolerances": {"drift": cfg.drift_tol, "bracket": cfg.bracket_tol,
                       "rank": cfg.rank_tol},
        "trajectories": rows,
        "involution": {"max_offdiagonal": bracket_max, "max_diagonal": diag_max,
                       "points": cfg.points},
        "independence": {"rank": int(rank), "required": int(m_required)},
        "checks": checks,
        "violations": violations,
        "pass": not violations,
        "timestamp": _stamp(),
    }
    return report, 0 if not violations else 1


def _verify_csv(report: dict) -> str:
    k = len(report["trajectories"][0]["drift"])
    header = "point_id," + ",".join(f"drift_I{i}" for i in range(k)) + ",energy_drift,left_domain"
    lines = [header]
    for r in report["trajectories"]:
        lines.append(
            f'{r["point_id"]},' + ",".join(repr(d) for d in r["drift"])
            + f',{r["energy_drift"]!r},{int(r["left_domain"])}'
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# factory


def cmd_factory(cfg: RunConfig) -> tuple[dict, int]:
    """Quotient-polynomial coefficients at seeded phase points, with the
    division remainder, the closed-form cross-check, and conservation of
    the coefficients along seeded geodesics.

    The remainder vanishes pointwise for any smooth pair (divisibility is
    pointwise algebra); it is the conservation check that discriminates
    equivalent pairs from broken ones.
    """
    pair = resolve_config_pair(cfg.pair)
    rng = np.random.default_rng(cfg.seed)
    phase = sample_phase_points(pair, cfg.points, rng)

    def one_point(job):
        pid, p = job
        fi = factory_integrals(pair, p)
        closed = coeffs_from_closed_form(pair, p)
        coeffs = np.asarray(fi.coeffs.coeffs, dtype=float)
        scale = float(np.linalg.norm(coeffs))
        return {
            "point_id": pid,
            "a": _finite(fi.a),
            "coeffs": [float(c) for c in coeffs],
            "closed_form": [float(c) for c in closed],
            "remainder": _finite(fi.remainder),
            "remainder_rel": _finite(abs(fi.remainder) / scale),
            "crosscheck": _finite(np.max(np.abs(coeffs - closed))),
        }

    rows = _pmap(one_point, list(enumerate(phase)))
    rows.sort(key=lambda r: r["point_id"])
    rem_max = max(r["remainder_rel"] for r in rows)
    cross_max = max(r["crosscheck"] for r in rows)

    starts = sample_phase_points(pair, cfg.trajectories, rng)
    opts = GeodesicOptions(energy_tol=1e-7)

    def one_trajectory(job):
        pid, p0 = job
        traj = integrate_geodesic(pair.g, p0, cfg.t_end, opts)
        step = max(1, len(traj) // 50)
        cs = np.array([
            factory_integrals(pair, traj.point(k)).coeffs.coeffs
            for k in range(0, len(traj), step)
        ])
        drift = np.max(np.abs(cs - cs[0]), axis=0) / np.maximum(np.abs(cs[0]), 1e-12)
        return {"point_id": pid, "coeff_drift": [float(d) for d in drift]}

    traj_rows = _pmap(one_trajectory, list(enumerate(starts)))
    traj_rows.sort(key=lambda r: r["point_id"])
    drift_max = max(max(r["coeff_drift"]) for r in traj_rows)

    checks = [
        {"name": "factory-remainder", "value": rem_max,
         "tol": FACTORY_REMAINDER_TOL, "pass": rem_max <= FACTORY_REMAINDER_TOL},
        {"name": "factory-crosscheck", "value": cross_max,
         "tol": FACTORY_CROSSCHECK_TOL, "pass": cross_max <= FACTORY_CROSSCHECK_TOL},
        {"name": "factory-conservation", "value": drift_max,
         "tol": cfg.drift_tol, "pass": drift_max <= cfg.drift_tol},
    ]
    violations = [c["name"] for c in checks if not c["pass"]]
    report = {
        "command": "factory",
        "pair": pair.pair_id,
        "dim": pair.dim,
        "seed": cfg.seed,
        "points": rows,
        "conservation": traj_rows,
        "checks": checks,
        "violations": violations,
        "pass": not violations,
        "timestamp": _stamp(),
    }
    return report, 0 if not violations else 1


def _factory_csv(report: dict) -> str:
    k = len(report["points"][0]["coeffs"])
    header = ("point_id,a," + ",".join(f"b{i}" for i in range(k))
              + ",remainder,remainder_rel,crosscheck")
    lines = [header]
    for r in report["points"]:
        lines.append(
            f'{r["point_id"]},{r["a"]!r},' + ",".join(repr(c) for c in r["coeffs"])
            + f',{r["remainder"]!r},{r["remainder_rel"]!r},{r["crosscheck"]!r}'
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# geodesic


def cmd_geodesic(cfg: RunConfig) -> tuple[dict, int]:
    """Integrate seeded geodesics of both metrics, export the trajectories,
    and summarize the unparameterized-curve distance per direction."""
    pair = resolve_config_pair(cfg.pair)
    rng = np.random.default_rng(cfg.seed)
    starts = sample_phase_points(pair, cfg.trajectories, rng)
    opts = GeodesicOptions(samples=1001, energy_tol=1e-7)
    out_dir = Path(cfg.out) if cfg.out is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def one_direction(job):
        pid, p0 = job
        tg = integrate_geodesic(pair.g, p0, cfg.t_end, opts)
        xib = p0.xi / pair.gbar.norm(p0.x, p0.xi)
        tb = integrate_geodesic(pair.gbar, PhasePoint(p0.x, xib), cfg.t_end, opts)
        dist = geodesic_coincidence(pair.g, pair.gbar, p0, length=cfg.t_end)
        row = {
            "point_id": pid,
            "curve_distance": _finite(dist),
            "g_arc_length": _finite(arc_length(tg, pair.g)),
            "left_domain_g": bool(tg.left_domain),
            "left_domain_gbar": bool(tb.left_domain),
        }
        if tg.left_domain or tb.left_domain:
            row["warning"] = "chart exit: partial trajectory"
        if out_dir is not None:
            for tag, traj in (("g", tg), ("gbar", tb)):
                name = f"geodesic_{pid:03d}_{tag}"
                if cfg.out_format == "csv":
                    (out_dir / f"{name}.csv").write_text(trajectory_to_csv(traj))
                else:
                    (out_dir / f"{name}.json").write_text(trajectory_to_json(traj))
        return row

    rows = _pmap(one_direction, list(enumerate(starts)))
    rows.sort(key=lambda r: r["point_id"])
    report = {
        "command": "geodesic",
        "pair": pair.pair_id,
        "dim": pair.dim,
        "seed": cfg.seed,
        "t_end": cfg.t_end,
        "directions": rows,
        "curve_distance_max": max(r["curve_distance"] for r in rows),
        "warnings": [r["point_id"] for r in rows if "warning" in r],
        "timestamp": _stamp(),
    }
    if out_dir is not None:
        (out_dir / "summary.json").write_text(_report_json(report))
    return report, 0


# ---------------------------------------------------------------------------
# levi-civita-build and catalog


def cmd_lc_build(config_path: str, out: str | None) -> int:
    """Build a normal-form pair from its JSON config and emit the equivalent
    inline metric-pair config (DSL strings keyed g[i][j] / gbar[i][j])."""
    try:
        with open(config_path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}")
    try:
        lc = build_pair(lcspec_from_json(doc))
    except (ValueError, DslError) as exc:
        raise ConfigError(f"normal-form build failed: {exc}")
    chart = lc.chart
    entry: dict = {
        "id": lc.pair.pair_id,
        "coordinates": list(chart.names),
        "box": [list(iv) for iv in chart.sample_box],
        "domain": None,
    }
    n = chart.dim
    for i in range(n):
        for j in range(i, n):
            entry[f"g[{i+1}][{j+1}]"] = str(lc.pair.g.entry(i, j))
            entry[f"gbar[{i+1}][{j+1}]"] = str(lc.pair.gbar.entry(i, j))
    _emit(_report_json({"pair": entry}), out)
    return 0


def cmd_catalog(out_format: str, out: str | None) -> int:
    """List the built-in pair names with one-line descriptions."""
    entries = [
        {"name": "sphere", "info": "round 2-sphere with itself (sanity pair)"},
        {"name": "euclidean:<n>", "info": "flat identity pair in n dimensions"},
        {"name": "ellipsoid:<a1,..,an>", "info":
            "induced metric on the ellipsoid sum x_k^2/a_k = 1 with its "
            "weighted companion, elliptic coordinates"},
        {"name": "lc:<path>", "info": "normal-form pair from a JSON config"},
        {"name": "falsify:perturbed-lc[:amp]", "info":
            "normal-form pair with gbar scaled by 1 + amp*sin(x1*x2), default 0.1"},
        {"name": "falsify:random-conformal[:amp]", "info":
            "flat g with gbar = exp(amp*x1) g, default amp 1"},
    ]
    for key in sorted(battery()):
        spec = battery()[key]
        entries.append({
            "name": f"lc-demo:{key}",
            "info": f"normal-form demo, blocks {list(spec.sizes)}, dim {spec.dim}",
        })
    if out_format == "csv":
        text = "name,info\n" + "\n".join(f'{e["name"]},"{e["info"]}"' for e in entries) + "\n"
    else:
        text = _report_json({"catalog": entries})
    _emit(text, out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geodequiv",
        description="first integrals of geodesic flows from equivalent metric pairs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_tols: bool = True):
        p.add_argument("--pair", help="catalog pair name (see the catalog subcommand)")
        p.add_argument("--config", help="JSON run-config path")
        p.add_argument("--seed", type=int, help="PRNG seed, echoed in the report")
        if with_tols:
            p.add_argument("--tol-drift", type=float, dest="tol_drift",
                           help="conservation tolerance (default 1e-6)")
            p.add_argument("--tol-bracket", type=float, dest="tol_bracket",
                           help="involution tolerance (default 1e-8)")
        p.add_argument("--t-end", type=float, dest="t_end",
                       help="integration time / arc-length window (default 5)")
        p.add_argument("--trajectories", type=int, help="geodesic count (default 20)")
        p.add_argument("--points", type=int, help="phase sample count (default 100)")
        p.add_argument("--format", choices=("json", "csv"), help="report format")
        p.add_argument("--out", help="output path (directory for geodesic)")

    add_common(sub.add_parser("verify", help="conservation/involution/rank suite"))
    add_common(sub.add_parser("factory", help="quotient-coefficient cross-checks"))
    add_common(sub.add_parser("geodesic", help="trajectory export and curve comparison"))

    lcb = sub.add_parser("levi-civita-build", help="normal-form pair to metric config")
    lcb.add_argument("--config", required=True, help="normal-form JSON config path")
    lcb.add_argument("--out", help="output path (default stdout)")

    cat = sub.add_parser("catalog", help="list built-in pairs")
    cat.add_argument("--format", choices=("json", "csv"), default="json")
    cat.add_argument("--out", help="output path (default stdout)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; keep the contract
        return int(exc.code or 0)
    try:
        if args.command == "catalog":
            return cmd_catalog(args.format, args.out)
        if args.command == "levi-civita-build":
            return cmd_lc_build(args.config, args.out)
        cfg = load_config(args)
        if args.command == "verify":
            report, code = cmd_verify(cfg)
            text = _verify_csv(report) if cfg.out_format == "csv" else _report_json(report)
            _emit(text, cfg.out)
            return code
        if args.command == "factory":
            report, code = cmd_factory(cfg)
            text = _factory_csv(report) if cfg.out_format == "csv" else _report_json(report)
            _emit(text, cfg.out)
            return code
        if args.command == "geodesic":
            report, code = cmd_geodesic(cfg)
            if cfg.out is None:
                _emit(_report_json(report), None)
            return code
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DslError, ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
