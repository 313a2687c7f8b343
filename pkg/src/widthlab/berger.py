"""Berger-sphere invariants: curvature, volume, and sweep-out width.

The one-parameter family g_rho squashes the round three-sphere along the
Hopf fibres; rho = 1 is the round metric.  Closed forms exist for the scalar
curvature (8 - 2 rho^2), the Ricci-positivity window (0 < rho < sqrt 2) and
the volume (2 pi^2 rho).  The sweep-out width comes from a one-dimensional
integral evaluated with the adaptive quadrature in
:mod:`widthlab.numerics`; the *normalized* width divides out volume^(2/3),
making it scale invariant.

The module also provides the two desk checks used throughout the test
suite: a finite-difference certificate that rho = 1 is a strict local
minimum of the normalized width, and the product bound
width * scalar_curvature <= 24 pi with equality only at the round metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._fsio import atomic_write_text
from .numerics import QuadratureConfig, central_second_difference, integrate_adaptive

__all__ = [
    "BergerReport",
    "LocalMinCertificate",
    "BoundCheck",
    "scalar_curvature",
    "has_positive_ricci",
    "volume",
    "normalized_width",
    "width",
    "report_at",
    "scan",
    "write_scan_csv",
    "read_scan_csv",
    "local_min_certificate",
    "scalar_normalized_bound_check",
]

ROUND_NORMALIZED_WIDTH = (16.0 / math.pi) ** (1.0 / 3.0)
PRODUCT_BOUND = 24.0 * math.pi


def _require_positive_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0.0) or not math.isfinite(rho):
        raise ValueError(f"Berger parameter must be a positive finite number, got {rho}")
    return rho


def scalar_curvature(rho: float) -> float:
    """Scalar curvature of g_rho, namely ``8 - 2 rho^2``."""
    rho = _require_positive_rho(rho)
    return 8.0 - 2.0 * rho * rho


def has_positive_ricci(rho: float) -> bool:
    """True exactly on the Ricci-positive window ``0 < rho < sqrt(2)``."""
    rho = _require_positive_rho(rho)
    return rho < math.sqrt(2.0)


def volume(rho: float) -> float:
    """Total volume ``2 pi^2 rho`` (linear in the fibre-squashing factor)."""
    rho = _require_positive_rho(rho)
    return 2.0 * math.pi**2 * rho


def normalized_width(rho: float, config: QuadratureConfig | None = None) -> float:
    """Scale-invariant sweep-out width of g_rho.

    Evaluates ``(2/pi)^(1/3) * integral_0^pi sin(s) *
    sqrt((1 - sin^2 s) rho^(-4/3) + sin^2 s * rho^(2/3)) ds`` adaptively.
    At rho = 1 the integrand collapses to sin(s) and the value is
    ``(16/pi)^(1/3)``.
    """
    rho = _require_positive_rho(rho)
    if config is None:
        config = QuadratureConfig(abs_tol=1e-12)
    a = rho ** (-4.0 / 3.0)
    b = rho ** (2.0 / 3.0)

    def integrand(s: float) -> float:
        sin2 = math.sin(s) ** 2
        return math.sin(s) * math.sqrt((1.0 - sin2) * a + sin2 * b)

    return (2.0 / math.pi) ** (1.0 / 3.0) * integrate_adaptive(integrand, 0.0, math.pi, config)


def width(rho: float, config: QuadratureConfig | None = None) -> float:
    """Sweep-out width, i.e. ``normalized_width * volume^(2/3)``."""
    return normalized_width(rho, config) * volume(rho) ** (2.0 / 3.0)


@dataclass(frozen=True)
class BergerReport:
    """One scan row of closed-form and quadrature invariants at a given rho."""

    rho: float
    scalar_curvature: float
    ricci_positive: bool
    volume: float
    width: float
    normalized_width: float

    def __post_init__(self):
        if not (self.rho > 0.0):
            raise ValueError(f"report requires rho > 0, got {self.rho}")
        if self.volume > 0.0 and self.normalized_width > 0.0:
            residual = abs(self.width / self.volume ** (2.0 / 3.0) - self.normalized_width)
            if residual > 1e-12 * self.normalized_width:
                raise ValueError(
                    f"width/volume^(2/3) inconsistent with normalized width at rho={self.rho}"
                )


def report_at(rho: float, config: QuadratureConfig | None = None) -> BergerReport:
    """Assemble the full invariant report at a single parameter value."""
    nw = normalized_width(rho, config)
    vol = volume(rho)
    return BergerReport(
        rho=float(rho),
        scalar_curvature=scalar_curvature(rho),
        ricci_positive=has_positive_ricci(rho),
        volume=vol,
        width=nw * vol ** (2.0 / 3.0),
        normalized_width=nw,
    )


def scan(
    rho_min: float,
    rho_max: float,
    count: int,
    config: QuadratureConfig | None = None,
    threads: int = 1,
) -> list[BergerReport]:
    """Evaluate reports on a logarithmically spaced parameter grid.

    Args:
        rho_min, rho_max: strictly increasing positive endpoints.
        count: number of grid points, at least 2.
        threads: evaluate rows with a thread pool of this size when > 1;
            ordering of the returned list is by rho either way.
    """
    if not (0.0 < rho_min < rho_max):
        raise ValueError(f"need 0 < rho_min < rho_max, got [{rho_min}, {rho_max}]")
    if count < 2:
        raise ValueError(f"scan needs at least 2 points, got {count}")
    rhos = np.geomspace(rho_min, rho_max, count)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda r: report_at(r, config), rhos))
    return [report_at(r, config) for r in rhos]


_CSV_HEADER = "rho,scalar_curvature,ricci_positive,volume,width,normalized_width"


def write_scan_csv(reports: list[BergerReport], path: str) -> None:
    """Write scan rows as CSV with ``%.17g`` floats (round-trip exact).

    The file is written atomically: a sibling temporary file is populated and
    renamed over the target.
    """
    lines = [_CSV_HEADER]
    for rep in reports:
        lines.append(
            ",".join(
                [
                    format(rep.rho, ".17g"),
                    format(rep.scalar_curvature, ".17g"),
                    "true" if rep.ricci_positive else "false",
                    format(rep.volume, ".17g"),
                    format(rep.width, ".17g"),
                    format(rep.normalized_width, ".17g"),
                ]
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_scan_csv(path: str) -> list[BergerReport]:
    """Read back a scan CSV, re-validating every row."""
    with open(path, "r") as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines or lines[0] != _CSV_HEADER:
        raise ValueError(f"unrecognized scan CSV header in {path}")
    reports = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != 6:
            raise ValueError(f"malformed scan row: {line!r}")
        reports.append(
            BergerReport(
                rho=float(cells[0]),
                scalar_curvature=float(cells[1]),
                ricci_positive={"true": True, "false": False}[cells[2]],
                volume=float(cells[3]),
                width=float(cells[4]),
                normalized_width=float(cells[5]),
            )
        )
    return reports


@dataclass(frozen=True)
class LocalMinCertificate:
    """Finite-difference evidence that rho = 1 minimizes normalized width."""

    h: float
    first_difference: float
    second_difference: float
    first_tol: float
    passed: bool


def local_min_certificate(
    h: float,
    config: QuadratureConfig | None = None,
    first_tol: float = 1e-4,
) -> LocalMinCertificate:
    """Certify the strict local minimum of normalized width at rho = 1.

    Computes the central first difference ``(nw(1+h) - nw(1-h)) / (2h)`` and
    the central second difference at rho = 1; passes when the former vanishes
    within ``first_tol`` and the latter is strictly positive.

    Args:
        h: finite-difference step, required to satisfy 0 < h < 0.5 so both
            probe points stay well inside the parameter domain.
    """
    if not (0.0 < h < 0.5):
        raise ValueError(f"step must satisfy 0 < h < 0.5, got {h}")
    if config is None:
        config = QuadratureConfig(abs_tol=1e-12)
    nw = lambda rho: normalized_width(rho, config)
    first = (nw(1.0 + h) - nw(1.0 - h)) / (2.0 * h)
    second = central_second_difference(nw, 1.0, h)
    passed = abs(first) <= first_tol and second > 0.0
    return LocalMinCertificate(
        h=h, first_difference=first, second_difference=second, first_tol=first_tol, passed=passed
    )


@dataclass(frozen=True)
class BoundCheck:
    """Result of the width * scalar-curvature product bound at one rho."""

    rho: float
    product: float
    bound: float
    passed: bool
    equality: bool


def scalar_normalized_bound_check(
    rho: float,
    config: QuadratureConfig | None = None,
    tol: float = 1e-4,
) -> BoundCheck:
    """Check ``width(rho) * (8 - 2 rho^2) <= 24 pi`` on 0 < rho < 2.

    The product equals 24 pi exactly at the round metric and falls away from
    it on either side; ``equality`` flags values within ``tol`` of the bound.

    Raises:
        ValueError: when rho >= 2, where the scalar curvature is no longer
            positive and the product bound is not meaningful.
    """
    rho = _require_positive_rho(rho)
    if rho >= 2.0:
        raise ValueError(f"product bound requires 0 < rho < 2, got {rho}")
    product = width(rho, config) * scalar_curvature(rho)
    return BoundCheck(
        rho=rho,
        product=product,
        bound=PRODUCT_BOUND,
        passed=product <= PRODUCT_BOUND + tol,
        equality=abs(product - PRODUCT_BOUND) < tol,
    )
