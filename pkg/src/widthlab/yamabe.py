"""Volume-normalized conformal curvature flow on axisymmetric profiles.

The metric g = u^4 g_round evolves by ``dg/dt = (r - R) g`` with r the
volume average of the scalar curvature; in conformal-factor form the update
is ``u_t = (u/4)(r - R)``, which follows from ``d(u^4)/dt = (r - R) u^4``.
Time stepping is explicit Euler followed by exact volume renormalization
(``u *= (V_target/V)^(1/6)``), so every accepted state has the initial
volume to machine precision.

Pole handling: the time stepper evaluates the pole Laplacian with the
even-symmetry ghost-node stencil ``lap(0) = 6 (u1 - u0) / h^2`` (second
order for smooth axisymmetric profiles, same as the one-sided evaluator
used for static curvature fields).  The one-sided stencil is centered at
the node next to the pole, so as a *dynamical* update its pole row is
anti-diffusive — a measured runaway rate of ``+6 / (h^2 u^4)`` at any step
size — while the symmetric row damps.  Pole values carry zero quadrature
weight (``sin^2`` vanishes there), so volume averages and the energy are
unaffected by the choice.

Stability: the leading diffusion coefficient of the update is ``2 u^-4``,
so a caller-facing step of size dt is executed as the minimal number of
explicit sub-steps satisfying ``dt_sub <= CFL_NUMBER * h^2 * min(u)^4``.
The measured spectral stability limit of the discrete update is
``h^2 min(u)^4 / 6`` across grids (the symmetric pole rows are 1.5x
stiffer than the interior); CFL_NUMBER = 0.125 keeps a 25% margin.

Diagnostics: the volume-normalized total-curvature energy
``E = (integral R dV) / V^(1/3)`` is non-increasing along the flow, and the
time derivative of the sweep-out width bound is compared against the first
variation ``(r - R(theta*)) * area(theta*)`` of the maximal latitude sphere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._fsio import atomic_write_text
from .conformal import (
    AxisymProfile,
    LatitudeSphere,
    max_latitude_sphere,
    scalar_curvature_field,
    sphere_area,
    width_upper_bound,
)
from .numerics import GridFunction

__all__ = [
    "FlowError",
    "FlowState",
    "FlowTrace",
    "CFL_NUMBER",
    "average_scalar_curvature",
    "hilbert_einstein_energy",
    "flow_state",
    "step",
    "run",
    "write_trace_csv",
    "width_derivative_monitor",
    "theorem1_monitor",
    "Theorem1Report",
    "write_run_summary_json",
    "ConformalVariation",
    "VariationReport",
    "maximum_test_direction",
]

CFL_NUMBER = 0.125
MAX_SUBSTEPS_PER_CALL = 100_000


class FlowError(RuntimeError):
    """Positivity loss or an unsatisfiable stability constraint."""


class _FlowKernel:
    """Precomputed grid data for fast repeated curvature/volume evaluation."""

    def __init__(self, n: int):
        self.n = n
        self.h = np.pi / (n - 1)
        self.thetas = np.linspace(0.0, np.pi, n)
        self.sin2 = np.sin(self.thetas) ** 2
        self.cot = np.zeros(n)
        self.cot[1:-1] = 1.0 / np.tan(self.thetas[1:-1])
        # Composite Simpson weights (3/8 tail when the interval count is odd).
        w = np.zeros(n)
        m = n - 1
        if m % 2 == 0:
            w[0] = w[-1] = 1.0
            w[1:-1:2] = 4.0
            w[2:-2:2] = 2.0
            w *= self.h / 3.0
        else:
            head = m - 3
            if head > 0:
                w[0] = 1.0
                w[1:head:2] = 4.0
                w[2:head:2] = 2.0
                w[head] = 1.0
                w[:head + 1] *= self.h / 3.0
            w[-4:] += np.array([1.0, 3.0, 3.0, 1.0]) * (3.0 * self.h / 8.0)
        self.simpson = w

    def scalar_curvature(self, u: np.ndarray) -> np.ndarray:
        # Symmetric ghost-node pole rows: stable as dynamics (see module
        # docstring), identical volume integrals to the one-sided evaluator.
        h2 = self.h * self.h
        lap = np.empty_like(u)
        lap[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2 + self.cot[1:-1] * (
            u[2:] - u[:-2]
        ) / self.h
        lap[0] = 6.0 * (u[1] - u[0]) / h2
        lap[-1] = 6.0 * (u[-2] - u[-1]) / h2
        return (-8.0 * lap + 6.0 * u) / u**5

    def volume(self, u: np.ndarray) -> float:
        return 4.0 * np.pi * float(self.simpson @ (u**6 * self.sin2))

    def average_r(self, scalar: np.ndarray, u: np.ndarray, vol: float) -> float:
        return 4.0 * np.pi * float(self.simpson @ (scalar * u**6 * self.sin2)) / vol


def average_scalar_curvature(profile: AxisymProfile) -> float:
    """Volume average ``(integral R dV) / V`` of the scalar curvature."""
    kernel = _FlowKernel(profile.n)
    u = profile.u
    return kernel.average_r(kernel.scalar_curvature(u), u, kernel.volume(u))


def hilbert_einstein_energy(profile: AxisymProfile) -> float:
    """Scale-invariant curvature energy ``(integral R dV) / V^(1/3)``."""
    kernel = _FlowKernel(profile.n)
    u = profile.u
    vol = kernel.volume(u)
    return kernel.average_r(kernel.scalar_curvature(u), u, vol) * vol ** (2.0 / 3.0)


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the flow with its standard diagnostics."""

    time: float
    profile: AxisymProfile
    volume: float
    r_avg: float
    energy: float
    width_bound: float
    max_sphere: LatitudeSphere


def flow_state(profile: AxisymProfile, time: float = 0.0) -> FlowState:
    """Assemble the diagnostic snapshot for a profile."""
    kernel = _FlowKernel(profile.n)
    u = profile.u
    vol = kernel.volume(u)
    r = kernel.average_r(kernel.scalar_curvature(u), u, vol)
    return FlowState(
        time=float(time),
        profile=profile,
        volume=vol,
        r_avg=r,
        energy=r * vol ** (2.0 / 3.0),
        width_bound=width_upper_bound(profile),
        max_sphere=max_latitude_sphere(profile),
    )


def _advance(
    kernel: _FlowKernel,
    u: np.ndarray,
    dt: float,
    target_volume: float,
    cfl: float,
) -> tuple[np.ndarray, int]:
    """Advance by dt with explicit sub-steps inside the stability region."""
    remaining = dt
    substeps = 0
    h2 = kernel.h * kernel.h
    while remaining > 0.0:
        stable = cfl * h2 * float(np.min(u)) ** 4
        sub = min(remaining, stable)
        substeps += 1
        if substeps > MAX_SUBSTEPS_PER_CALL:
            raise FlowError(
                f"step rejected: stability constraint needs more than "
                f"{MAX_SUBSTEPS_PER_CALL} sub-steps (min(u) = {np.min(u):.3e})"
            )
        scalar = kernel.scalar_curvature(u)
        vol = kernel.volume(u)
        r = kernel.average_r(scalar, u, vol)
        u = u + sub * (u / 4.0) * (r - scalar)
        if not np.all(u > 0.0) or not np.all(np.isfinite(u)):
            raise FlowError(
                f"conformal factor lost positivity during an explicit sub-step "
                f"of size {sub:.3e}"
            )
        u = u * (target_volume / kernel.volume(u)) ** (1.0 / 6.0)
        remaining -= sub
    return u, substeps


def step(state: FlowState, dt: float, cfl: float = CFL_NUMBER) -> FlowState:
    """One caller-facing flow step of size dt, volume held at state.volume.

    The step is executed as explicit Euler sub-steps obeying
    ``dt_sub <= cfl * h^2 * min(u)^4`` (measured stability limit: the same
    expression with coefficient 1/6), each followed by exact volume
    renormalization.

    Raises:
        FlowError: on positivity loss or an unsatisfiable stability bound.
        ValueError: for a non-positive dt.
    """
    if not (dt > 0.0):
        raise ValueError(f"dt must be positive, got {dt}")
    kernel = _FlowKernel(state.profile.n)
    u, _ = _advance(kernel, state.profile.u.copy(), dt, state.volume, cfl)
    return flow_state(AxisymProfile(GridFunction(u)), state.time + dt)


@dataclass
class FlowTrace:
    """Sampled states plus per-outer-step monitor arrays.

    ``monitors`` maps names to arrays of length equal to the number of outer
    steps taken: ``t``, ``volume_drift`` (|V - V0| after renormalization),
    ``energy``, ``r_avg``, ``sup_R_minus_r`` and ``substeps``.  ``samples``
    holds one CSV-ready record per sampled state.
    """

    states: list[FlowState]
    step_size: float
    status: str
    target_volume: float
    monitors: dict[str, np.ndarray]
    samples: list[dict]

    def __post_init__(self):
        times = [s.time for s in self.states]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trace times must be strictly increasing")


def run(
    profile: AxisymProfile,
    t_end: float,
    dt: float,
    sample_every: int = 500,
    convergence_tol: float = 1e-3,
    cfl: float = CFL_NUMBER,
) -> FlowTrace:
    """Run the flow from ``profile`` until ``t_end`` or convergence.

    A state snapshot is recorded every ``sample_every`` outer steps (plus the
    initial and final states).  The run stops early with status
    ``"converged"`` once ``sup|R - r| < convergence_tol`` at the end of an
    outer step; otherwise the status is ``"completed"``.

    Raises:
        ValueError: for non-positive dt/t_end or sample_every < 1.
        FlowError: positivity loss or unsatisfiable stability constraint.
    """
    if not (dt > 0.0) or not (t_end > 0.0):
        raise ValueError(f"t_end and dt must be positive, got t_end={t_end}, dt={dt}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    kernel = _FlowKernel(profile.n)
    u = profile.u.copy()
    target_volume = kernel.volume(u)
    n_steps = int(round(t_end / dt))
    n_steps = max(n_steps, 1)

    mon_t = np.empty(n_steps)
    mon_drift = np.empty(n_steps)
    mon_energy = np.empty(n_steps)
    mon_r = np.empty(n_steps)
    mon_sup = np.empty(n_steps)
    mon_sub = np.empty(n_steps, dtype=int)

    def snapshot(time: float, current: np.ndarray, sup_dev: float) -> None:
        prof = AxisymProfile(GridFunction(current.copy()))
        state = flow_state(prof, time)
        states.append(state)
        samples.append(
            {
                "t": time,
                "volume": state.volume,
                "r_avg": state.r_avg,
                "energy": state.energy,
                "width_bound": state.width_bound,
                "max_theta": state.max_sphere.theta,
                "sup_R_minus_r": sup_dev,
            }
        )

    states: list[FlowState] = []
    samples: list[dict] = []
    scalar0 = kernel.scalar_curvature(u)
    r0 = kernel.average_r(scalar0, u, target_volume)
    snapshot(0.0, u, float(np.max(np.abs(scalar0 - r0))))

    status = "completed"
    taken = 0
    for i in range(n_steps):
        u, subs = _advance(kernel, u, dt, target_volume, cfl)
        taken = i + 1
        time = taken * dt
        scalar = kernel.scalar_curvature(u)
        vol = kernel.volume(u)
        r = kernel.average_r(scalar, u, vol)
        sup_dev = float(np.max(np.abs(scalar - r)))
        mon_t[i] = time
        mon_drift[i] = abs(vol - target_volume)
        mon_energy[i] = r * vol ** (2.0 / 3.0)
        mon_r[i] = r
        mon_sup[i] = sup_dev
        mon_sub[i] = subs
        converged = sup_dev < convergence_tol
        if taken % sample_every == 0 or taken == n_steps or converged:
            snapshot(time, u, sup_dev)
        if converged:
            status = "converged"
            break

    monitors = {
        "t": mon_t[:taken],
        "volume_drift": mon_drift[:taken],
        "energy": mon_energy[:taken],
        "r_avg": mon_r[:taken],
        "sup_R_minus_r": mon_sup[:taken],
        "substeps": mon_sub[:taken],
    }
    return FlowTrace(
        states=states,
        step_size=dt,
        status=status,
        target_volume=target_volume,
        monitors=monitors,
        samples=samples,
    )


_TRACE_HEADER = "t,volume,r_avg,energy,width_bound,max_theta,sup_R_minus_r"


def write_trace_csv(trace: FlowTrace, path: str) -> None:
    """Write the sampled trace as CSV with %.17g floats, atomically."""
    lines = [_TRACE_HEADER]
    for row in trace.samples:
        lines.append(
            ",".join(
                format(row[key], ".17g")
                for key in (
                    "t",
                    "volume",
                    "r_avg",
                    "energy",
                    "width_bound",
                    "max_theta",
                    "sup_R_minus_r",
                )
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def width_derivative_monitor(trace: FlowTrace) -> list[dict]:
    """Compare the width bound's time derivative with its first variation.

    For each interior sampled time, ``lhs`` is the centered difference of
    the width bound and ``rhs = (r - R(theta*)) * area(theta*)`` evaluated on
    the maximal latitude sphere; ``residual = lhs - rhs`` decays under
    simultaneous grid and time refinement.

    Raises:
        ValueError: if the trace holds fewer than three sampled states.
    """
    states = trace.states
    if len(states) < 3:
        raise ValueError("width-derivative monitor needs at least 3 sampled states")
    records = []
    for i in range(1, len(states) - 1):
        before, here, after = states[i - 1], states[i], states[i + 1]
        lhs = (after.width_bound - before.width_bound) / (after.time - before.time)
        field = scalar_curvature_field(here.profile)
        theta = here.max_sphere.theta
        r_at_max = float(np.interp(theta, here.profile.thetas, field.values))
        rhs = (here.r_avg - r_at_max) * here.max_sphere.area
        records.append(
            {"t": here.time, "lhs": lhs, "rhs": rhs, "residual": lhs - rhs}
        )
    return records


@dataclass(frozen=True)
class Theorem1Report:
    """Product bound ``width * r <= 24 pi`` at the width's maximum in time."""

    tau_star: float
    product_at_max: float
    bound: float
    passed: bool
    final_normalized_width: float


def theorem1_monitor(trace: FlowTrace, tol: float = 1e-3) -> Theorem1Report:
    """Evaluate the width-curvature product at the trace's width maximum.

    Also reports the final ``width_bound / volume^(2/3)``, which approaches
    ``(16/pi)^(1/3)`` when the flow converges to a constant-curvature limit.
    """
    if not trace.states:
        raise ValueError("empty trace")
    peak = max(trace.states, key=lambda s: s.width_bound)
    product = peak.width_bound * peak.r_avg
    bound = 24.0 * math.pi
    final = trace.states[-1]
    return Theorem1Report(
        tau_star=peak.time,
        product_at_max=product,
        bound=bound,
        passed=product <= bound + tol,
        final_normalized_width=final.width_bound / final.volume ** (2.0 / 3.0),
    )


@dataclass(frozen=True)
class ConformalVariation:
    """Volume-preserving conformal family ``g(t)`` seeded by a mean-zero f.

    ``g(t) = V^(2/3) (1 + t f) g / V((1+t f) g)^(2/3)``; at t = 0 the
    variation velocity is exactly ``f g`` and the volume is constant in t.
    """

    base: AxisymProfile
    f: GridFunction

    def profile_at(self, t: float) -> AxisymProfile:
        factor = 1.0 + t * self.f.values
        if not np.all(factor > 0.0):
            raise ValueError(f"variation parameter t={t} leaves the metric cone")
        kernel = _FlowKernel(self.base.n)
        base_vol = kernel.volume(self.base.u)
        u_t = self.base.u * factor**0.25
        vol_t = kernel.volume(u_t)
        return AxisymProfile(GridFunction(u_t * (base_vol / vol_t) ** (1.0 / 6.0)))


@dataclass(frozen=True)
class VariationReport:
    """Mean-zero test direction and its integral over the maximal sphere."""

    variation: ConformalVariation
    trace_integral_over_max_sphere: float


def maximum_test_direction(profile: AxisymProfile, f: GridFunction) -> VariationReport:
    """Build the volume-preserving family for f and integrate it at the top.

    The direction is made mean-zero by subtracting its volume average
    (a precondition of the family construction), then integrated over the
    maximal latitude sphere: at a time where the width bound is maximal this
    integral is non-positive for admissible directions.
    """
    if f.n != profile.n:
        raise ValueError(f"direction grid ({f.n}) must match profile grid ({profile.n})")
    kernel = _FlowKernel(profile.n)
    u = profile.u
    vol = kernel.volume(u)
    mean = kernel.average_r(f.values, u, vol)
    adjusted = GridFunction(f.values - mean)
    sphere = max_latitude_sphere(profile)
    f_at_top = float(np.interp(sphere.theta, profile.thetas, adjusted.values))
    return VariationReport(
        variation=ConformalVariation(base=profile, f=adjusted),
        trace_integral_over_max_sphere=f_at_top * sphere.area,
    )


def write_run_summary_json(
    trace: FlowTrace,
    path: str,
    config: dict | None = None,
    format_version: str = "widthlab-report/1",
) -> None:
    """Write a JSON summary of a flow run (final state plus monitors)."""
    final = trace.states[-1]
    report = theorem1_monitor(trace)
    monitors = trace.monitors
    payload = {
        "format": format_version,
        "config": config or {},
        "status": trace.status,
        "steps": int(monitors["t"].size),
        "target_volume": trace.target_volume,
        "final": {
            "t": final.time,
            "volume": final.volume,
            "r_avg": final.r_avg,
            "energy": final.energy,
            "width_bound": final.width_bound,
            "max_theta": final.max_sphere.theta,
            "sup_R_minus_r": float(monitors["sup_R_minus_r"][-1]),
            "normalized_width": final.width_bound / final.volume ** (2.0 / 3.0),
        },
        "max_volume_drift": float(np.max(monitors["volume_drift"])),
        "max_energy_increase": float(
            np.max(np.diff(monitors["energy"])) if monitors["energy"].size > 1 else 0.0
        ),
        "theorem1": {
            "tau_star": report.tau_star,
            "product_at_max": report.product_at_max,
            "bound": report.bound,
            "passed": report.passed,
            "final_normalized_width": report.final_normalized_width,
        },
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
