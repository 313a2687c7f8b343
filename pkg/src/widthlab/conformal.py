"""Axisymmetric conformal metrics g = u^4 g_round on the three-sphere.

A metric in this class is described by a positive profile u(theta) sampled on
the uniform latitude grid; the latitude two-spheres {theta = const} have area
``A(theta) = 4 pi u(theta)^4 sin^2(theta)`` and sweep the sphere from pole to
pole, so ``max_theta A`` is an upper bound for the sweep-out width.

The module provides the discrete scalar curvature of g, volume and areas,
location of the minimal (critical-area) coordinate spheres, and a
finite-difference second-variation oracle for their stability: the area of a
normal graph with zonal-harmonic height is differenced in the graph
amplitude, which measures the Jacobi eigenvalues
``lambda_k = k(k+1)/radius^2 - Q`` with ``Q = Ric(N,N) + |A|^2``.

A separately seeded Monte Carlo check verifies the round-metric identity
that averaging a function over uniformly random great two-spheres equals its
volume average.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ._fsio import atomic_write_text
from .numerics import (
    GridFunction,
    QuadratureConfig,
    composite_simpson,
    critical_points,
    integrate_adaptive,
)

__all__ = [
    "ProfileError",
    "AxisymProfile",
    "LatitudeSphere",
    "SpectrumReport",
    "StarReport",
    "IsoperimetricCheck",
    "GreatSphereCheck",
    "load_profile",
    "save_profile",
    "scalar_curvature_field",
    "volume",
    "sphere_area",
    "area_profile",
    "minimal_coordinate_spheres",
    "second_variation_oracle",
    "jacobi_spectrum",
    "analyze_sphere",
    "width_upper_bound",
    "max_latitude_sphere",
    "star_scan",
    "curvature_integral_over_sphere",
    "isoperimetric_check",
    "great_sphere_average_check",
]

ZERO_EIGENVALUE_TOL = 1e-6


class ProfileError(ValueError):
    """Raised for profiles that fail positivity or pole-regularity checks."""


@dataclass(frozen=True)
class AxisymProfile:
    """Positive conformal profile u on the uniform latitude grid.

    Smooth axisymmetric metrics require ``u'(0) = u'(pi) = 0``; discretely
    this is enforced as ``|u_1 - u_0| <= pole_reg_factor * max(u) * h^2``
    (and mirrored at pi), which admits pole second derivatives up to about
    ``2 * pole_reg_factor * max(u)`` while rejecting conical profiles whose
    one-sided difference decays only like h.
    """

    grid: GridFunction
    pole_reg_factor: float = 5.0

    def __post_init__(self):
        u = self.grid.values
        if not np.all(u > 0.0):
            raise ProfileError("conformal profile must be strictly positive")
        h = self.grid.spacing
        bound = self.pole_reg_factor * float(np.max(u)) * h * h
        defect = max(abs(u[1] - u[0]), abs(u[-1] - u[-2]))
        if defect > bound:
            raise ProfileError(
                f"pole regularity violated: one-sided difference {defect:.3e} "
                f"exceeds {bound:.3e}; profiles need vanishing derivative at both poles"
            )

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def u(self) -> np.ndarray:
        return self.grid.values

    @property
    def thetas(self) -> np.ndarray:
        return self.grid.thetas

    @property
    def spacing(self) -> float:
        return self.grid.spacing

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], n: int, **kwargs) -> "AxisymProfile":
        return cls(GridFunction.from_function(fn, n), **kwargs)

    @classmethod
    def round_profile(cls, n: int, radius_factor: float = 1.0) -> "AxisymProfile":
        return cls(GridFunction(np.full(n, float(radius_factor))))

    def interp_u(self, theta: float) -> float:
        """Linear interpolation of the profile between grid nodes."""
        return float(np.interp(theta, self.thetas, self.u))


def load_profile(path: str) -> AxisymProfile:
    """Read a profile from JSON ``{"n": ..., "u": [...], "description": ...}``."""
    with open(path, "r") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict) or "n" not in payload or "u" not in payload:
        raise ProfileError(f"profile file {path} must contain 'n' and 'u'")
    u = np.asarray(payload["u"], dtype=float)
    if int(payload["n"]) != u.size:
        raise ProfileError(f"profile file {path}: n={payload['n']} but {u.size} samples")
    return AxisymProfile(GridFunction(u))


def save_profile(profile: AxisymProfile, path: str, description: str | None = None) -> None:
    payload: dict = {"n": profile.n, "u": [float(v) for v in profile.u]}
    if description is not None:
        payload["description"] = description
    atomic_write_text(path, json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def scalar_curvature_field(profile: AxisymProfile) -> GridFunction:
    """Discrete scalar curvature ``u^-5 (-8 lap(u) + 6 u)`` node by node.

    The round-metric Laplacian of an axisymmetric function is
    ``lap(u) = u'' + 2 cot(theta) u'``, discretized with centered second-order
    differences in the interior.  At the poles the regular limit is
    ``3 u''(0)``, with u'' taken from the three-point one-sided stencil.
    """
    u = profile.u
    h = profile.grid.spacing
    thetas = profile.thetas
    lap = np.empty_like(u)
    upp = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    up = (u[2:] - u[:-2]) / (2.0 * h)
    lap[1:-1] = upp + 2.0 * up / np.tan(thetas[1:-1])
    lap[0] = 3.0 * (u[0] - 2.0 * u[1] + u[2]) / (h * h)
    lap[-1] = 3.0 * (u[-1] - 2.0 * u[-2] + u[-3]) / (h * h)
    return GridFunction((-8.0 * lap + 6.0 * u) / u**5)


def volume(profile: AxisymProfile) -> float:
    """Total volume ``4 pi * integral u^6 sin^2(theta) d theta``."""
    integrand = 4.0 * np.pi * profile.u**6 * np.sin(profile.thetas) ** 2
    return composite_simpson(integrand, profile.grid.spacing)


def sphere_area(profile: AxisymProfile, theta: float) -> float:
    """Area ``4 pi u(theta)^4 sin^2(theta)`` of one latitude sphere."""
    if not (0.0 <= theta <= np.pi):
        raise ValueError(f"latitude must lie in [0, pi], got {theta}")
    return 4.0 * np.pi * profile.interp_u(theta) ** 4 * math.sin(theta) ** 2


def area_profile(profile: AxisymProfile) -> GridFunction:
    """Latitude-sphere areas sampled at the grid nodes."""
    return GridFunction(4.0 * np.pi * profile.u**4 * np.sin(profile.thetas) ** 2)


@dataclass(frozen=True)
class LatitudeSphere:
    """One latitude two-sphere, with stability data once analyzed.

    ``jacobi_Q``, ``index`` and ``nullity`` are None until a spectrum
    computation fills them in.  ``area`` always equals
    ``4 pi * induced_radius_sq`` by construction.
    """

    theta: float
    area: float
    minimality_residual: float
    induced_radius_sq: float
    jacobi_Q: float | None = None
    index: int | None = None
    nullity: int | None = None

    def __post_init__(self):
        if not (0.0 < self.theta < np.pi):
            raise ValueError(f"latitude sphere must be interior, got theta={self.theta}")
        if abs(self.area - 4.0 * np.pi * self.induced_radius_sq) > 1e-12 * max(1.0, self.area):
            raise ValueError("area inconsistent with induced radius")
        for name in ("index", "nullity"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, int) or value < 0):
                raise ValueError(f"{name} must be a nonnegative integer, got {value}")


def _sphere_at(profile: AxisymProfile, theta: float, residual: float) -> LatitudeSphere:
    radius_sq = profile.interp_u(theta) ** 4 * math.sin(theta) ** 2
    return LatitudeSphere(
        theta=float(theta),
        area=4.0 * np.pi * radius_sq,
        minimality_residual=float(residual),
        induced_radius_sq=radius_sq,
    )


def _refine_critical_node(values: np.ndarray, i: int, h: float) -> tuple[float, float]:
    """Vertex of the parabola through nodes i-1, i, i+1.

    Returns the offset from node i and the fitted extremal value; node values
    are exact samples, so the vertex value gains two orders of accuracy over
    the raw grid maximum.
    """
    denom = values[i - 1] - 2.0 * values[i] + values[i + 1]
    if denom == 0.0:
        return 0.0, float(values[i])
    offset = 0.5 * h * (values[i - 1] - values[i + 1]) / denom
    offset = float(np.clip(offset, -h, h))
    fitted = values[i] - 0.125 * (values[i + 1] - values[i - 1]) ** 2 / denom
    return offset, float(fitted)


def minimal_coordinate_spheres(profile: AxisymProfile) -> list[LatitudeSphere]:
    """Latitude spheres at the interior critical points of the area profile.

    Strict extrema are refined off-node by local quadratic interpolation;
    saddle-flat runs are reported at their middle node.  The
    ``minimality_residual`` is the centered difference |A'| at the anchoring
    node, which vanishes to grid order at a genuine critical latitude.
    """
    areas = area_profile(profile)
    h = areas.spacing
    values = areas.values
    thetas = areas.thetas
    spheres = []
    for i, kind in critical_points(areas):
        if kind == "saddle-flat":
            theta = thetas[i]
        else:
            offset, _ = _refine_critical_node(values, i, h)
            theta = thetas[i] + offset
        residual = abs(values[i + 1] - values[i - 1]) / (2.0 * h)
        spheres.append(_sphere_at(profile, theta, residual))
    return spheres


def width_upper_bound(profile: AxisymProfile) -> float:
    """Maximal latitude-sphere area, refined by quadratic interpolation.

    This is the value of the latitude sweep-out, hence an upper bound for
    the sweep-out width of the metric.
    """
    areas = area_profile(profile)
    values = areas.values
    i = int(np.argmax(values))
    if i == 0 or i == areas.n - 1:
        return float(values[i])
    _, fitted = _refine_critical_node(values, i, areas.spacing)
    return max(fitted, float(values[i]))


def max_latitude_sphere(profile: AxisymProfile) -> LatitudeSphere:
    """The latitude sphere realizing the sweep-out maximum."""
    areas = area_profile(profile)
    values = areas.values
    i = int(np.argmax(values))
    i = min(max(i, 1), areas.n - 2)
    offset, _ = _refine_critical_node(values, i, areas.spacing)
    residual = abs(values[i + 1] - values[i - 1]) / (2.0 * areas.spacing)
    return _sphere_at(profile, areas.thetas[i] + offset, residual)


def _criticality_scale(profile: AxisymProfile) -> float:
    return 0.02 * float(np.max(area_profile(profile).values))


def _check_critical(profile: AxisymProfile, theta_star: float) -> None:
    h = profile.grid.spacing
    lo = max(theta_star - h, 0.0)
    hi = min(theta_star + h, np.pi)
    slope = (sphere_area(profile, hi) - sphere_area(profile, lo)) / (hi - lo)
    if abs(slope) > _criticality_scale(profile):
        raise ValueError(
            f"theta={theta_star} is not a critical latitude "
            f"(|A'| = {abs(slope):.3e} exceeds tolerance {_criticality_scale(profile):.3e})"
        )


def _legendre_pair(k: int, x: float) -> tuple[float, float]:
    """Legendre polynomial P_k(x) and the polar derivative helper.

    Returns (P_k(x), P_k'(x)); the recurrence is exact for the small degrees
    used by the spectrum computations.
    """
    if k == 0:
        return 1.0, 0.0
    p_prev, p = 1.0, x
    for m in range(1, k):
        p_prev, p = p, ((2 * m + 1) * x * p - m * p_prev) / (m + 1)
    denom = 1.0 - x * x
    if denom < 1e-14:
        # At the poles P'_k(+-1) = +-... k(k+1)/2 * x^(k+1); only the product
        # sin(phi) * P'_k is ever used there, so the exact value is immaterial.
        return p, 0.5 * k * (k + 1) * (x ** (k + 1))
    return p, k * (p_prev - x * p) / denom


def second_variation_oracle(
    profile: AxisymProfile,
    theta_star: float,
    k: int,
    eps: float,
    quad: QuadratureConfig | None = None,
) -> float:
    """Finite-difference Jacobi quadratic form on a zonal harmonic.

    Perturbs the critical latitude sphere to the normal graph
    ``theta(omega) = theta_star + eps * P_k(cos phi) / u(theta_star)^2``
    (height ``eps * P_k`` against the unit normal of g), computes its area by
    quadrature, and returns the second difference in eps divided by the
    squared L^2 norm of the harmonic on the unperturbed sphere.  For an exact
    Jacobi field this converges to ``k(k+1)/radius^2 - Q`` as eps -> 0; in
    particular the k = 0 value is ``-Q``.

    Raises:
        ValueError: for non-critical ``theta_star``, degree k < 0, or an eps
            so large the graph would leave the latitude band around the
            sphere.
    """
    if k < 0 or int(k) != k:
        raise ValueError(f"harmonic degree must be a nonnegative integer, got {k}")
    if not (0.0 < theta_star < np.pi):
        raise ValueError(f"theta_star must be interior, got {theta_star}")
    _check_critical(profile, theta_star)
    u_star = profile.interp_u(theta_star)
    c = 1.0 / (u_star * u_star)
    margin = min(theta_star, np.pi - theta_star)
    if not (0.0 < eps <= 0.25) or eps * c > 0.5 * margin:
        raise ValueError(
            f"eps={eps} out of range: need 0 < eps <= 0.25 and "
            f"eps/u(theta*)^2 <= {0.5 * margin:.3e}"
        )
    if quad is None:
        # Tolerance scales with the sphere area so conformally scaled
        # profiles integrate at the same relative precision.
        quad = QuadratureConfig(
            abs_tol=1e-12 * max(1.0, sphere_area(profile, theta_star))
        )
    thetas = profile.thetas
    u = profile.u

    def graph_area(amplitude: float) -> float:
        def integrand(phi: float) -> float:
            x = math.cos(phi)
            p_k, dp_k = _legendre_pair(k, x)
            theta = theta_star + amplitude * c * p_k
            u_theta = float(np.interp(theta, thetas, u))
            sin_theta = math.sin(theta)
            grad_sq = (math.sin(phi) * dp_k) ** 2
            stretch = math.sqrt(
                1.0 + (amplitude * c) ** 2 * grad_sq / (sin_theta * sin_theta)
            )
            return 2.0 * math.pi * u_theta**4 * sin_theta**2 * stretch * math.sin(phi)

        return integrate_adaptive(integrand, 0.0, math.pi, quad)

    base = graph_area(0.0)
    second_diff = (graph_area(eps) - 2.0 * base + graph_area(-eps)) / (eps * eps)
    norm_sq = 4.0 * np.pi * u_star**4 * math.sin(theta_star) ** 2 / (2 * k + 1)
    return second_diff / norm_sq


@dataclass(frozen=True)
class SpectrumReport:
    """Jacobi spectrum of one latitude sphere via the measured Q."""

    theta: float
    jacobi_Q: float
    induced_radius_sq: float
    eigenvalues: list[tuple[int, float, int]]  # (degree, eigenvalue, multiplicity)
    index: int
    nullity: int


def jacobi_spectrum(
    profile: AxisymProfile,
    theta_star: float,
    k_max: int,
    eps: float = 1e-2,
    quad: QuadratureConfig | None = None,
) -> SpectrumReport:
    """Morse index and nullity of a critical latitude sphere.

    The curvature term Q is extracted from the k = 0 second-variation oracle
    at ``eps`` and ``eps/2`` with Richardson extrapolation (the second
    difference carries an O(eps^2) bias).  Eigenvalues then follow from
    ``lambda_k = k(k+1)/radius^2 - Q`` with multiplicity 2k+1, and zeros are
    detected at tolerance 1e-6.

    Raises:
        ValueError: if ``k_max < 2`` (the spectrum must at least reach the
            translation harmonics).
    """
    if k_max < 2:
        raise ValueError(f"k_max must be at least 2, got {k_max}")
    d_full = second_variation_oracle(profile, theta_star, 0, eps, quad)
    d_half = second_variation_oracle(profile, theta_star, 0, 0.5 * eps, quad)
    q = -(4.0 * d_half - d_full) / 3.0
    radius_sq = profile.interp_u(theta_star) ** 4 * math.sin(theta_star) ** 2
    eigenvalues = []
    index = 0
    nullity = 0
    for k in range(k_max + 1):
        lam = k * (k + 1) / radius_sq - q
        mult = 2 * k + 1
        eigenvalues.append((k, lam, mult))
        if lam < -ZERO_EIGENVALUE_TOL:
            index += mult
        elif abs(lam) <= ZERO_EIGENVALUE_TOL:
            nullity += mult
    return SpectrumReport(
        theta=float(theta_star),
        jacobi_Q=q,
        induced_radius_sq=radius_sq,
        eigenvalues=eigenvalues,
        index=index,
        nullity=nullity,
    )


def analyze_sphere(
    profile: AxisymProfile,
    sphere: LatitudeSphere,
    k_max: int = 4,
    eps: float = 1e-2,
) -> LatitudeSphere:
    """Fill a sphere's jacobi_Q, index and nullity from its spectrum."""
    spectrum = jacobi_spectrum(profile, sphere.theta, k_max, eps)
    return replace(
        sphere, jacobi_Q=spectrum.jacobi_Q, index=spectrum.index, nullity=spectrum.nullity
    )


@dataclass(frozen=True)
class StarReport:
    """Stability survey of the latitude sweep-out.

    The verdict is explicitly restricted to axisymmetric coordinate-sphere
    candidates: ``star_holds_on_axisym_candidates`` is true when no listed
    sphere is strictly stable (index 0, nullity 0) with area at most the
    sweep-out maximum.  Non-axisymmetric minimal spheres are out of scope.
    """

    width_upper_bound: float
    minimal_spheres: list[LatitudeSphere]
    star_holds_on_axisym_candidates: bool


def star_scan(profile: AxisymProfile, k_max: int = 4, eps: float = 1e-2) -> StarReport:
    """Analyze every critical latitude sphere and test the stability verdict."""
    bound = width_upper_bound(profile)
    spheres = [
        analyze_sphere(profile, s, k_max=k_max, eps=eps)
        for s in minimal_coordinate_spheres(profile)
    ]
    violating = [
        s for s in spheres if s.index == 0 and s.nullity == 0 and s.area <= bound
    ]
    return StarReport(
        width_upper_bound=bound,
        minimal_spheres=spheres,
        star_holds_on_axisym_candidates=not violating,
    )


def curvature_integral_over_sphere(profile: AxisymProfile, theta_star: float) -> float:
    """``R(theta_star) * area(theta_star)``; R is constant on each latitude."""
    field = scalar_curvature_field(profile)
    r_star = float(np.interp(theta_star, profile.thetas, field.values))
    return r_star * sphere_area(profile, theta_star)


@dataclass(frozen=True)
class IsoperimetricCheck:
    """Sweep-out maximum against the round equator at equal volume.

    ``max_profile_area`` bounds the isoperimetric profile maximum from
    above, so ``passed`` certifies the sharp comparison whenever it is true;
    a failure of this conservative check is not a counterexample.
    """

    max_profile_area: float
    round_equator_area_same_volume: float
    passed: bool


def isoperimetric_check(profile: AxisymProfile, tol: float = 1e-3) -> IsoperimetricCheck:
    vol = volume(profile)
    round_area = 4.0 * np.pi * (vol / (2.0 * np.pi**2)) ** (2.0 / 3.0)
    max_area = width_upper_bound(profile)
    return IsoperimetricCheck(
        max_profile_area=max_area,
        round_equator_area_same_volume=round_area,
        passed=max_area <= round_area + tol,
    )


@dataclass(frozen=True)
class GreatSphereCheck:
    """Great-sphere average of f against its volume average (round metric)."""

    lhs: float
    rhs: float
    rel_err: float


def great_sphere_average_check(
    f: Callable[[np.ndarray], np.ndarray],
    samples: int,
    seed: int,
) -> GreatSphereCheck:
    """Monte Carlo test of the great-sphere integral identity.

    ``lhs`` draws `samples` uniformly random great two-spheres of the round
    three-sphere (unit normals in R^4) with one uniform point on each, giving
    an unbiased estimate of the averaged normalized sphere integral of f;
    ``rhs`` estimates the volume average of f from `samples` independent
    uniform points of the same seeded stream.  For the round metric the two
    agree; ``rel_err`` is |lhs - rhs| / |rhs| (inf when rhs = 0).

    Args:
        f: vectorized callable on arrays of shape (m, 4) of unit vectors.
        samples: number of Monte Carlo draws, at least 1000.
    """
    if samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {samples}")
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((samples, 4))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    raw = rng.standard_normal((samples, 4))
    tangent = raw - np.sum(raw * normals, axis=1, keepdims=True) * normals
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    lhs = float(np.mean(f(tangent)))
    direct = rng.standard_normal((samples, 4))
    direct /= np.linalg.norm(direct, axis=1, keepdims=True)
    rhs = float(np.mean(f(direct)))
    rel_err = abs(lhs - rhs) / abs(rhs) if rhs != 0.0 else float("inf")
    return GreatSphereCheck(lhs=lhs, rhs=rhs, rel_err=rel_err)
