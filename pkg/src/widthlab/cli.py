"""Batch command-line front end for the width analyses.

Every subcommand runs one analysis and writes machine-readable output (JSON
for structured reports, CSV for curves and scans; CSV files get a JSON
sidecar at ``<path>.meta.json``).  Each emitted file embeds the fully
resolved configuration and the format version string, and repeated runs
with identical configuration and seed produce byte-identical files.

Exit codes: 0 on success, 1 on validation errors (bad flags, unreadable
input, precondition violations), 2 on numerical failure (flow positivity
loss, quadrature exhaustion, or a failed self-test item).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import berger, conformal, equidist, yamabe
from ._fsio import atomic_write_text
from .numerics import QuadratureError

__all__ = [
    "FORMAT_VERSION",
    "RunConfig",
    "RoundcheckItem",
    "RoundcheckReport",
    "roundcheck",
    "dispatch",
    "main",
]

FORMAT_VERSION = "widthlab-report/1"
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

DEFAULT_SEED = 2026

_COMMANDS = (
    "berger-scan",
    "berger-certify",
    "conformal-analyze",
    "yamabe-run",
    "equidist-check",
    "equidist-sequence",
    "roundcheck",
)

_PARAM_DEFAULTS: dict[str, dict] = {
    "berger-scan": {"rho_min": 1e-3, "rho_max": 1e4, "n": 50},
    "berger-certify": {
        "h": 1e-2,
        "grid_lo": 1e-2,
        "grid_hi": 1.99,
        "grid_n": 100,
        "tol": 1e-4,
    },
    "conformal-analyze": {"k_max": 4, "eps": 1e-2},
    "yamabe-run": {
        "t_end": 1.0,
        "dt": 1e-4,
        "sample_every": 500,
        "convergence_tol": 1e-3,
        "trace_csv": None,
    },
    "equidist-check": {"tol": 1e-9},
    "equidist-sequence": {"k_max": 10_000, "weighted": False, "tol": 1e-9},
    "roundcheck": {},
}

_DEFAULT_OUTPUT = {
    "berger-scan": "berger_scan.csv",
    "berger-certify": "berger_certify.json",
    "conformal-analyze": "conformal_analyze.json",
    "yamabe-run": "yamabe_run.json",
    "equidist-check": "equidist_check.json",
    "equidist-sequence": "equidist_trace.csv",
    "roundcheck": "roundcheck.json",
}

_NEEDS_INPUT = {
    "conformal-analyze",
    "yamabe-run",
    "equidist-check",
    "equidist-sequence",
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description for one dispatch."""

    command: str
    output_path: str
    input_path: str | None = None
    seed: int = DEFAULT_SEED
    threads: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in _COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.command in _NEEDS_INPUT and not self.input_path:
            raise ValueError(f"{self.command} requires an input path")

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "input_path": self.input_path,
            "output_path": self.output_path,
            "seed": self.seed,
            "threads": self.threads,
            **self.params,
        }


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path: str, payload: dict) -> None:
    atomic_write_text(
        path,
        json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)
        + "\n",
    )


def _write_sidecar(csv_path: str, cfg: RunConfig) -> None:
    _write_json(
        csv_path + ".meta.json", {"format": FORMAT_VERSION, "config": cfg.as_dict()}
    )


# ---------------------------------------------------------------------------
# Command handlers.
# ---------------------------------------------------------------------------


def _run_berger_scan(cfg: RunConfig) -> None:
    p = cfg.params
    reports = berger.scan(p["rho_min"], p["rho_max"], p["n"], threads=cfg.threads)
    berger.write_scan_csv(reports, cfg.output_path)
    _write_sidecar(cfg.output_path, cfg)
    print(f"wrote {len(reports)} scan rows to {cfg.output_path}")


def _run_berger_certify(cfg: RunConfig) -> None:
    p = cfg.params
    certificate = berger.local_min_certificate(p["h"], first_tol=p["tol"])
    rhos = np.geomspace(p["grid_lo"], p["grid_hi"], p["grid_n"])
    checks = [berger.scalar_normalized_bound_check(r, tol=p["tol"]) for r in rhos]
    equality_rhos = [c.rho for c in checks if c.equality]
    payload = {
        "format": FORMAT_VERSION,
        "config": cfg.as_dict(),
        "local_min": {
            "h": certificate.h,
            "first_difference": certificate.first_difference,
            "second_difference": certificate.second_difference,
            "passed": certificate.passed,
        },
        "product_bound": {
            "bound": berger.PRODUCT_BOUND,
            "max_product": max(c.product for c in checks),
            "all_below_bound": all(c.passed for c in checks),
            "equality_rhos": equality_rhos,
        },
    }
    _write_json(cfg.output_path, payload)
    print(
        f"local min passed={certificate.passed}, "
        f"bound holds={payload['product_bound']['all_below_bound']} "
        f"on {p['grid_n']} grid points"
    )


def _sphere_payload(sphere) -> dict:
    return {
        "theta": sphere.theta,
        "area": sphere.area,
        "minimality_residual": sphere.minimality_residual,
        "jacobi_Q": sphere.jacobi_Q,
        "index": sphere.index,
        "nullity": sphere.nullity,
    }


def _run_conformal_analyze(cfg: RunConfig) -> None:
    p = cfg.params
    profile = conformal.load_profile(cfg.input_path)
    star = conformal.star_scan(profile, k_max=p["k_max"], eps=p["eps"])
    curvature = conformal.scalar_curvature_field(profile)
    iso = conformal.isoperimetric_check(profile)
    payload = {
        "format": FORMAT_VERSION,
        "config": cfg.as_dict(),
        "n": profile.n,
        "volume": conformal.volume(profile),
        "scalar_curvature": {
            "min": float(np.min(curvature.values)),
            "max": float(np.max(curvature.values)),
        },
        "width_upper_bound": star.width_upper_bound,
        "normalized_width_bound": star.width_upper_bound
        / conformal.volume(profile) ** (2.0 / 3.0),
        "minimal_spheres": [_sphere_payload(s) for s in star.minimal_spheres],
        "star_holds_on_axisym_candidates": star.star_holds_on_axisym_candidates,
        "isoperimetric": {
            "max_profile_area": iso.max_profile_area,
            "round_equator_area_same_volume": iso.round_equator_area_same_volume,
            "passed": iso.passed,
        },
    }
    _write_json(cfg.output_path, payload)
    print(
        f"analyzed {cfg.input_path}: {len(star.minimal_spheres)} minimal "
        f"spheres, width bound {star.width_upper_bound:.6f}"
    )


def _run_yamabe_run(cfg: RunConfig) -> None:
    p = cfg.params
    profile = conformal.load_profile(cfg.input_path)
    trace = yamabe.run(
        profile,
        t_end=p["t_end"],
        dt=p["dt"],
        sample_every=p["sample_every"],
        convergence_tol=p["convergence_tol"],
    )
    yamabe.write_run_summary_json(trace, cfg.output_path, config=cfg.as_dict())
    if p["trace_csv"]:
        yamabe.write_trace_csv(trace, p["trace_csv"])
        _write_sidecar(p["trace_csv"], cfg)
    final = trace.states[-1]
    print(
        f"flow {trace.status} at t={final.time:.6g}: r_avg={final.r_avg:.6f}, "
        f"normalized width bound "
        f"{final.width_bound / final.volume ** (2.0 / 3.0):.7f}"
    )


def _run_equidist_check(cfg: RunConfig) -> None:
    mu0, family = equidist.load_instance(cfg.input_path)
    certificate = equidist.cone_hull_membership(mu0, family, tol=cfg.params["tol"])
    payload = {
        "format": FORMAT_VERSION,
        "config": cfg.as_dict(),
        "verdict": certificate.verdict,
        "coefficients": (
            [[j, c] for j, c in certificate.coefficients]
            if certificate.coefficients is not None
            else None
        ),
        "separating_f": (
            [float(v) for v in certificate.separating_f]
            if certificate.separating_f is not None
            else None
        ),
    }
    _write_json(cfg.output_path, payload)
    print(f"{cfg.input_path}: {certificate.verdict}")


def _run_equidist_sequence(cfg: RunConfig) -> None:
    p = cfg.params
    mu0, family = equidist.load_instance(cfg.input_path)
    if p["weighted"]:
        trace = equidist.weighted_cesaro_structured(
            mu0, family, p["k_max"], tol=p["tol"]
        )
    else:
        trace = equidist.cesaro_sequence(mu0, family, p["k_max"], tol=p["tol"])
    equidist.write_trace_csv(trace, cfg.output_path)
    _write_sidecar(cfg.output_path, cfg)
    print(
        f"wrote {len(trace.sequence)} steps to {cfg.output_path}; "
        f"final error {trace.cesaro_errors[-1]:.3e}"
    )


# ---------------------------------------------------------------------------
# Round-metric self-test.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundcheckItem:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class RoundcheckReport:
    items: tuple[RoundcheckItem, ...]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)


def _berger_item() -> RoundcheckItem:
    nw = berger.normalized_width(1.0)
    w = berger.width(1.0)
    ok = (
        abs(nw - berger.ROUND_NORMALIZED_WIDTH) < 1e-6
        and abs(w - 4.0 * math.pi) < 1e-5
    )
    return RoundcheckItem(
        "berger-round-width",
        ok,
        f"normalized width {nw:.7f} (target {berger.ROUND_NORMALIZED_WIDTH:.7f})",
    )


def _conformal_item() -> RoundcheckItem:
    profile = conformal.AxisymProfile.round_profile(201)
    vol_ok = abs(conformal.volume(profile) - 2.0 * math.pi**2) < 1e-8
    curvature = conformal.scalar_curvature_field(profile)
    r_ok = float(np.max(np.abs(curvature.values - 6.0))) < 1e-8
    width_ok = abs(conformal.width_upper_bound(profile) - 4.0 * math.pi) < 1e-8
    spectrum = conformal.jacobi_spectrum(profile, math.pi / 2.0, k_max=2)
    spec_ok = spectrum.index == 1 and spectrum.nullity == 3
    return RoundcheckItem(
        "conformal-round-geometry",
        vol_ok and r_ok and width_ok and spec_ok,
        f"volume/R/width ok={vol_ok and r_ok and width_ok}, "
        f"equator index {spectrum.index}, nullity {spectrum.nullity}",
    )


def _yamabe_item() -> RoundcheckItem:
    state = yamabe.flow_state(conformal.AxisymProfile.round_profile(101))
    stepped = yamabe.step(state, 1e-4)
    drift = float(np.max(np.abs(stepped.profile.u - 1.0)))
    ok = drift < 1e-12 and abs(state.r_avg - 6.0) < 1e-8
    return RoundcheckItem(
        "yamabe-round-stationary", ok, f"sup|u - 1| = {drift:.3e} after one step"
    )


def _equidist_item() -> RoundcheckItem:
    ray = equidist.FiniteMeasure(np.array([1.0, 1.0]))
    family = equidist.MeasureFamily(members=(ray,))
    member = equidist.cone_hull_membership(
        equidist.FiniteMeasure(np.array([3.0, 3.0])), family
    )
    non_member = equidist.cone_hull_membership(
        equidist.FiniteMeasure(np.array([1.0, 2.0])), family
    )
    alternating = equidist.cesaro_sequence(
        equidist.FiniteMeasure(np.array([1.0, 1.0])),
        equidist.MeasureFamily(
            members=(
                equidist.FiniteMeasure(np.array([1.0, 0.0])),
                equidist.FiniteMeasure(np.array([0.0, 1.0])),
            )
        ),
        100,
    )
    ok = (
        member.verdict == "member"
        and member.coefficients == ((0, 3.0),)
        and non_member.verdict == "non_member"
        and alternating.cesaro_errors[-1] == 0.0
    )
    return RoundcheckItem(
        "equidist-trivial-instances",
        ok,
        f"ray member={member.verdict}, off-ray={non_member.verdict}, "
        f"alternating error {alternating.cesaro_errors[-1]:.1e}",
    )


def roundcheck() -> RoundcheckReport:
    """One-shot self-test of all four analysis engines on round data."""
    items = []
    for builder in (_berger_item, _conformal_item, _yamabe_item, _equidist_item):
        try:
            items.append(builder())
        except Exception as exc:  # a crashed item is a failed item
            name = builder.__name__.strip("_").replace("_", "-")
            items.append(RoundcheckItem(name, False, f"raised {exc!r}"))
    return RoundcheckReport(items=tuple(items))


def _run_roundcheck(cfg: RunConfig) -> None:
    report = roundcheck()
    for item in report.items:
        print(f"{'PASS' if item.passed else 'FAIL'} {item.name}: {item.detail}")
    payload = {
        "format": FORMAT_VERSION,
        "config": cfg.as_dict(),
        "passed": report.passed,
        "items": [
            {"name": i.name, "passed": i.passed, "detail": i.detail}
            for i in report.items
        ],
    }
    _write_json(cfg.output_path, payload)
    if not report.passed:
        raise QuadratureError("roundcheck self-test failed", 0.0, 0.0)


_HANDLERS = {
    "berger-scan": _run_berger_scan,
    "berger-certify": _run_berger_certify,
    "conformal-analyze": _run_conformal_analyze,
    "yamabe-run": _run_yamabe_run,
    "equidist-check": _run_equidist_check,
    "equidist-sequence": _run_equidist_sequence,
    "roundcheck": _run_roundcheck,
}


def dispatch(cfg: RunConfig) -> int:
    """Run one resolved configuration and map failures to exit codes."""
    try:
        _HANDLERS[cfg.command](cfg)
    except (yamabe.FlowError, QuadratureError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and config resolution.
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="widthlab",
        description="Width, curvature-flow, and equidistribution analyses "
        "with machine-readable output.",
    )
    sub = parser.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--output", dest="output_path", help="output file path")
        sp.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")

    sp = sub.add_parser("berger-scan", help="normalized width over a log grid")
    common(sp)
    sp.add_argument("--rho-min", dest="rho_min", type=float)
    sp.add_argument("--rho-max", dest="rho_max", type=float)
    sp.add_argument("--n", dest="n", type=int, help="number of grid points")

    sp = sub.add_parser(
        "berger-certify", help="round local minimum and product bound certificates"
    )
    common(sp)
    sp.add_argument("--h", dest="h", type=float, help="finite-difference step")
    sp.add_argument("--grid-lo", dest="grid_lo", type=float)
    sp.add_argument("--grid-hi", dest="grid_hi", type=float)
    sp.add_argument("--grid-n", dest="grid_n", type=int)
    sp.add_argument("--tol", dest="tol", type=float)

    sp = sub.add_parser(
        "conformal-analyze", help="minimal spheres, width bound, and stability"
    )
    common(sp)
    sp.add_argument("--input", dest="input_path", help="profile JSON")
    sp.add_argument("--k-max", dest="k_max", type=int)
    sp.add_argument("--eps", dest="eps", type=float)

    sp = sub.add_parser("yamabe-run", help="normalized Yamabe flow from a profile")
    common(sp)
    sp.add_argument("--profile", dest="input_path", help="initial profile JSON")
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--dt", dest="dt", type=float)
    sp.add_argument("--sample-every", dest="sample_every", type=int)
    sp.add_argument("--convergence-tol", dest="convergence_tol", type=float)
    sp.add_argument("--trace-csv", dest="trace_csv", help="also write the monitor CSV")

    sp = sub.add_parser("equidist-check", help="cone-hull membership certificate")
    common(sp)
    sp.add_argument("--input", dest="input_path", help="instance JSON")
    sp.add_argument("--tol", dest="tol", type=float)

    sp = sub.add_parser("equidist-sequence", help="greedy Cesaro error trace")
    common(sp)
    sp.add_argument("--input", dest="input_path", help="instance JSON")
    sp.add_argument("--k-max", dest="k_max", type=int)
    sp.add_argument("--tol", dest="tol", type=float)
    sp.add_argument(
        "--weighted",
        dest="weighted",
        action="store_const",
        const=True,
        help="use the mass-weighted structured variant",
    )

    sp = sub.add_parser("roundcheck", help="one-shot round-metric self-test")
    common(sp)

    return parser


def _resolve_threads() -> int:
    raw = os.environ.get("WIDTHLAB_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ValueError(f"WIDTHLAB_THREADS must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ValueError(f"WIDTHLAB_THREADS must be >= 1, got {threads}")
    return threads


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, optional JSON config file, and explicit flags."""
    command = args.command
    params = dict(_PARAM_DEFAULTS[command])
    merged = {
        "input_path": None,
        "output_path": _DEFAULT_OUTPUT[command],
        "seed": DEFAULT_SEED,
        **params,
    }
    if getattr(args, "config", None):
        with open(args.config) as handle:
            file_values = json.load(handle)
        unknown = set(file_values) - set(merged)
        if unknown:
            raise ValueError(
                f"unknown config keys for {command}: {sorted(unknown)}"
            )
        merged.update(file_values)
    for key in merged:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return RunConfig(
        command=command,
        output_path=merged.pop("output_path"),
        input_path=merged.pop("input_path"),
        seed=merged.pop("seed"),
        threads=_resolve_threads(),
        params=merged,
    )


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse prints usage itself; normalize its exit code contract.
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
