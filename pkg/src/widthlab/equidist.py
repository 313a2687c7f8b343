"""Cone-hull membership and Cesaro equidistribution on finite ground sets.

Radon measures on X = {1..n} are nonnegative weight vectors; the weak-*
topology is realized as the sup norm.  Membership of a target measure in
the closed convex cone spanned by a finite family is decided by an exact
rational simplex method (coefficients are converted from float to
`fractions.Fraction` without rounding), so member certificates reconstruct
the target exactly and separating functionals satisfy their sign conditions
exactly, not merely to floating tolerance.

The equidistribution side builds sequences whose Cesaro means of
normalized measures (or mass-weighted means, for structured families)
converge to the normalized target; selection is greedy nearest-mean in sup
norm with lowest-index tie-breaking.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._fsio import atomic_write_text

__all__ = [
    "FiniteMeasure",
    "FamilyStructure",
    "MeasureFamily",
    "MembershipCertificate",
    "EquidistTrace",
    "cone_hull_membership",
    "condition_i_predicate",
    "condition_ii_violator",
    "RationalApproximation",
    "rational_approximation",
    "cesaro_sequence",
    "weighted_cesaro_structured",
    "HarnessReport",
    "equivalence_harness",
    "save_instance",
    "load_instance",
    "write_certificate_json",
    "write_trace_csv",
]

MAX_GROUND_SET = 64
MAX_FAMILY = 64


@dataclass(frozen=True)
class FiniteMeasure:
    """Nonnegative weight vector over the ground set {1..n}."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("measure weights must form a non-empty 1-D array")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("measure weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class FamilyStructure:
    """Generating set W with multiplicity bound and mass bounds (c, C)."""

    base: tuple[FiniteMeasure, ...]
    multiplicity_bound: int
    mass_bounds: tuple[float, float]

    def __post_init__(self):
        if not self.base:
            raise ValueError("structured family needs a non-empty base set")
        if self.multiplicity_bound < 1:
            raise ValueError("multiplicity bound must be a positive integer")
        c, big_c = self.mass_bounds
        if not (0.0 < c <= big_c):
            raise ValueError(f"mass bounds must satisfy 0 < c <= C, got ({c}, {big_c})")


@dataclass(frozen=True)
class MeasureFamily:
    """Finite family of measures, optionally with generating structure."""

    members: tuple[FiniteMeasure, ...]
    structure: FamilyStructure | None = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("measure family must be non-empty")
        sizes = {m.n for m in self.members}
        if self.structure is not None:
            sizes |= {m.n for m in self.structure.base}
        if len(sizes) != 1:
            raise ValueError("all measures in a family must share the ground set")
        if len(self.members) > MAX_FAMILY:
            raise ValueError(f"family size capped at {MAX_FAMILY}")

    @property
    def n(self) -> int:
        return self.members[0].n


@dataclass(frozen=True)
class MembershipCertificate:
    """Outcome of a cone-hull membership query.

    Member certificates carry conic coefficients indexed into the family;
    non-member certificates carry a separating functional f with
    ``<f, mu0> > 0`` and ``<f, mu> <= 0`` for every family member, both
    verified in exact rational arithmetic before the certificate is issued.
    """

    verdict: str
    coefficients: tuple[tuple[int, float], ...] | None = None
    separating_f: np.ndarray | None = None

    def __post_init__(self):
        if self.verdict not in ("member", "non_member"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "member" and self.coefficients is None:
            raise ValueError("member certificate needs coefficients")
        if self.verdict == "non_member" and self.separating_f is None:
            raise ValueError("non-member certificate needs a separating functional")


@dataclass(frozen=True)
class EquidistTrace:
    """Selected indices and the running sup-norm Cesaro errors."""

    sequence: tuple[int, ...]
    cesaro_errors: tuple[float, ...]

    def __post_init__(self):
        if len(self.sequence) != len(self.cesaro_errors):
            raise ValueError("sequence and error trace must have equal length")
        if any(e < 0.0 for e in self.cesaro_errors):
            raise ValueError("Cesaro errors must be nonnegative")


# ---------------------------------------------------------------------------
# Exact rational simplex (dense tableau, Bland's rule).
# ---------------------------------------------------------------------------

_ZERO = Fraction(0)
_ONE = Fraction(1)


class _Simplex:
    """Minimal dense two-phase simplex over exact rationals.

    Solves min c.x subject to A x = b, x >= 0 where b >= 0.  Bland's rule
    guarantees termination; the problem sizes here are desk scale, so no
    sparsity or revised-form machinery is needed.
    """

    def __init__(self, columns: list[list[Fraction]], b: list[Fraction], costs: list[Fraction]):
        self.m = len(b)
        self.n_rows_original = self.m
        self.n_struct = len(columns)
        # Tableau columns: structural variables then artificials then rhs.
        self.tab = [
            [columns[j][i] for j in range(self.n_struct)]
            + [(_ONE if i == k else _ZERO) for k in range(self.m)]
            + [b[i]]
            for i in range(self.m)
        ]
        self.basis = [self.n_struct + i for i in range(self.m)]
        self.row_ids = list(range(self.m))
        self.costs = costs

    def _pivot(self, row: int, col: int) -> None:
        tab = self.tab
        piv = tab[row][col]
        tab[row] = [v / piv for v in tab[row]]
        for r in range(self.m):
            if r != row and tab[r][col] != 0:
                factor = tab[r][col]
                tab[r] = [v - factor * p for v, p in zip(tab[r], tab[row])]
        self.basis[row] = col

    def _reduced_costs(self, cost_of) -> tuple[list[Fraction], list[Fraction]]:
        # y solves y . B = c_B implicitly through the updated tableau:
        # reduced cost of column j is c_j - sum_r c_{basis r} * tab[r][j].
        cb = [cost_of(j) for j in self.basis]
        width = len(self.tab[0]) - 1 if self.tab else 0
        reduced = []
        for j in range(width):
            val = cost_of(j)
            for r in range(self.m):
                if self.tab[r][j] != 0:
                    val -= cb[r] * self.tab[r][j]
            reduced.append(val)
        return reduced, cb

    def _minimize(self, cost_of, width: int) -> None:
        while True:
            reduced, _ = self._reduced_costs(cost_of)
            entering = next((j for j in range(width) if reduced[j] < 0), None)
            if entering is None:
                return
            best_row = None
            best_ratio = None
            for r in range(self.m):
                coeff = self.tab[r][entering]
                if coeff > 0:
                    ratio = self.tab[r][-1] / coeff
                    if (
                        best_ratio is None
                        or ratio < best_ratio
                        or (ratio == best_ratio and self.basis[r] < self.basis[best_row])
                    ):
                        best_ratio = ratio
                        best_row = r
            if best_row is None:
                raise ArithmeticError("unbounded linear program")
            self._pivot(best_row, entering)

    def solve(self) -> tuple[Fraction, list[Fraction], list[Fraction]]:
        """Two-phase solve; returns (objective, x, y) with y the final duals."""
        art_cost = lambda j: _ONE if j >= self.n_struct else _ZERO
        self._minimize(art_cost, self.n_struct + self.n_rows_original)
        phase1 = sum(
            self.tab[r][-1] for r in range(self.m) if self.basis[r] >= self.n_struct
        )
        if phase1 > 0:
            return self._finish(art_cost, phase1)
        # Drive residual zero-level artificials out of the basis when possible;
        # rows where no structural pivot exists are redundant constraints and
        # are dropped (their dual components are reported as zero).
        for r in range(self.m):
            if self.basis[r] >= self.n_struct:
                col = next(
                    (j for j in range(self.n_struct) if self.tab[r][j] != 0), None
                )
                if col is not None:
                    self._pivot(r, col)
        keep = [r for r in range(self.m) if self.basis[r] < self.n_struct]
        if len(keep) < self.m:
            self.tab = [self.tab[r] for r in keep]
            self.basis = [self.basis[r] for r in keep]
            self.row_ids = [self.row_ids[r] for r in keep]
            self.m = len(keep)
        struct_cost = lambda j: self.costs[j] if j < self.n_struct else _ONE
        # Entering restricted to structural columns: artificials stay out.
        self._minimize(struct_cost, self.n_struct)
        objective = sum(
            struct_cost(self.basis[r]) * self.tab[r][-1] for r in range(self.m)
        )
        return self._finish(struct_cost, objective)

    def _finish(self, cost_of, objective):
        x = [_ZERO] * self.n_struct
        for r, j in enumerate(self.basis):
            if j < self.n_struct:
                x[j] = self.tab[r][-1]
        # Duals: y_i = c_B . column of the i-th artificial in the tableau,
        # indexed by original row (dropped redundant rows contribute zero).
        cb = [cost_of(j) for j in self.basis]
        y = [_ZERO] * self.n_rows_original
        for row_id in self.row_ids:
            col = self.n_struct + row_id
            y[row_id] = sum(cb[r] * self.tab[r][col] for r in range(self.m))
        return objective, x, y


def _fractions(values) -> list[Fraction]:
    return [Fraction(float(v)) for v in values]


def cone_hull_membership(
    mu0: FiniteMeasure, family: MeasureFamily, tol: float = 1e-9
) -> MembershipCertificate:
    """Decide whether mu0 lies in the closed cone generated by the family.

    The feasibility system ``sum_j x_j mu_j = mu0, x >= 0`` is solved in
    exact rational arithmetic.  If it is infeasible, a second exact program
    minimizes the sup-norm defect ``t = ||sum x_j mu_j - mu0||_inf``; the
    verdict is "member" when the minimal defect is at most ``tol``, and
    otherwise the optimal dual variables yield the separating functional.

    Raises:
        ValueError: ground set above the supported size, non-positive tol,
            mismatched dimensions, or a degenerate all-zero family.
    """
    if mu0.n > MAX_GROUND_SET:
        raise ValueError(f"ground set capped at {MAX_GROUND_SET} points")
    if mu0.n != family.n:
        raise ValueError("target and family live on different ground sets")
    if not (tol > 0.0):
        raise ValueError(f"tolerance must be positive, got {tol}")
    if all(m.total_mass == 0.0 for m in family.members):
        raise ValueError("degenerate family: every member is the zero measure")

    n = mu0.n
    members = family.members
    b = _fractions(mu0.weights)
    cols = [_fractions(m.weights) for m in members]

    feas = _Simplex(
        [list(col) for col in cols], list(b), [_ZERO] * len(cols)
    )
    defect, x, _ = feas.solve()
    if defect == 0:
        return _member_certificate(x, members, mu0, exact=True)

    # Exact minimization of t = sup-norm reconstruction defect:
    # rows i:      (A x)_i - t + s1_i = b_i
    # rows n + i:  (A x)_i + t - s2_i = b_i
    columns: list[list[Fraction]] = []
    costs: list[Fraction] = []
    for col in cols:
        columns.append(col + col)
        costs.append(_ZERO)
    columns.append([-_ONE] * n + [_ONE] * n)  # t
    costs.append(_ONE)
    for i in range(n):  # s1
        columns.append([_ONE if r == i else _ZERO for r in range(2 * n)])
        costs.append(_ZERO)
    for i in range(n):  # s2
        columns.append([-_ONE if r == n + i else _ZERO for r in range(2 * n)])
        costs.append(_ZERO)
    program = _Simplex(columns, b + b, costs)
    t_min, solution, y = program.solve()
    if t_min <= Fraction(tol):
        return _member_certificate(solution[: len(cols)], members, mu0, exact=False)

    f = [y[i] + y[n + i] for i in range(n)]
    pairing = sum(fi * bi for fi, bi in zip(f, b))
    if pairing <= 0:
        raise ArithmeticError("separating functional failed exact verification")
    for col in cols:
        if sum(fi * ci for fi, ci in zip(f, col)) > 0:
            raise ArithmeticError("separating functional failed exact verification")
    return MembershipCertificate(
        verdict="non_member",
        separating_f=np.array([float(v) for v in f]),
    )


def _member_certificate(x, members, mu0, exact: bool) -> MembershipCertificate:
    if exact:
        recon = [
            sum(Fraction(float(m.weights[i])) * xi for m, xi in zip(members, x))
            for i in range(mu0.n)
        ]
        if any(r != Fraction(float(v)) for r, v in zip(recon, mu0.weights)):
            raise ArithmeticError("member certificate failed exact reconstruction")
    return MembershipCertificate(
        verdict="member",
        coefficients=tuple(
            (j, float(xj)) for j, xj in enumerate(x) if xj != 0
        ),
    )


def condition_i_predicate(
    mu0: FiniteMeasure, family: MeasureFamily, f: np.ndarray
) -> bool:
    """Test direction i) of the equivalence: if ``<f, mu0> < 0`` then some
    family member must also pair non-positively with f; otherwise the
    predicate holds vacuously."""
    f = np.asarray(f, dtype=float)
    if f.shape != (mu0.n,):
        raise ValueError("functional dimension must match the ground set")
    if float(f @ mu0.weights) >= 0.0:
        return True
    return any(float(f @ m.weights) <= 0.0 for m in family.members)


def condition_ii_violator(mu0: FiniteMeasure, f: np.ndarray) -> np.ndarray:
    """Shift a separating functional into a violator of condition ii).

    ``f0 = <f, mu0>/mu0(X) - f`` pairs to exactly zero with mu0 while
    pairing strictly positively with every positive-mass measure that f
    separates, witnessing the failure of "positive on the family implies
    positive on the target".
    """
    if mu0.total_mass <= 0.0:
        raise ValueError("the target measure must have positive mass")
    f = np.asarray(f, dtype=float)
    mean = float(f @ mu0.weights) / mu0.total_mass
    return mean - f


@dataclass(frozen=True)
class RationalApproximation:
    """Common-denominator approximation with positive integer numerators."""

    d: int
    numerators: tuple[int, ...]


def rational_approximation(alphas, eps: float) -> RationalApproximation:
    """Smallest common denominator d with |alpha_i - c_i/d| < eps/N for all i.

    Sweeps denominators in increasing order, rounding each numerator to the
    nearest positive integer; the output bound is re-verified before
    returning (self-checking postcondition).

    Raises:
        ValueError: non-positive alphas or eps.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("alphas must form a non-empty 1-D array")
    if np.any(alphas <= 0.0) or not np.all(np.isfinite(alphas)):
        raise ValueError("all alphas must be positive finite reals")
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    count = alphas.size
    target = eps / count
    # Rounding alone achieves 1/(2d) < eps/N once d > N/(2 eps); the
    # positivity clamp on numerators can only delay success while some
    # alpha_i < target, which the extra 1/min(alpha) margin absorbs.
    d_cap = int(np.ceil(count / (2.0 * eps) + 1.0 / float(np.min(alphas)))) + 2
    block = 4096
    start = 1
    while start <= d_cap:
        stop = min(start + block, d_cap + 1)
        ds = np.arange(start, stop, dtype=float)[:, None]
        numerators = np.maximum(np.rint(alphas[None, :] * ds), 1.0)
        ok = np.all(np.abs(alphas[None, :] - numerators / ds) < target, axis=1)
        hits = np.flatnonzero(ok)
        if hits.size:
            d = int(ds[hits[0], 0])
            c = tuple(int(v) for v in numerators[hits[0]])
            assert all(
                abs(a - ci / d) < target for a, ci in zip(alphas, c)
            ), "rational approximation failed its own bound"
            return RationalApproximation(d=d, numerators=c)
        start = stop
    raise ArithmeticError("denominator sweep exhausted; eps bound unreachable")


def _greedy_trace(
    target: np.ndarray,
    candidates: np.ndarray,
    masses: np.ndarray,
    k_max: int,
    weighted: bool,
) -> EquidistTrace:
    """Greedy nearest-mean selection shared by both Cesaro variants."""
    running = np.zeros_like(target)
    total_mass = 0.0
    sequence = []
    errors = []
    for k in range(1, k_max + 1):
        if weighted:
            trial = (running + candidates) / (total_mass + masses)[:, None]
        else:
            trial = (running + candidates) / float(k)
        dists = np.max(np.abs(trial - target), axis=1)
        pick = int(np.argmin(dists))  # argmin takes the lowest index on ties
        sequence.append(pick)
        errors.append(float(dists[pick]))
        running = running + candidates[pick]
        total_mass += masses[pick]
    return EquidistTrace(sequence=tuple(sequence), cesaro_errors=tuple(errors))


def cesaro_sequence(
    mu0: FiniteMeasure, family: MeasureFamily, k_max: int, tol: float = 1e-9
) -> EquidistTrace:
    """Greedy sequence whose Cesaro mean of normalized members approaches
    the normalized target in sup norm.

    Raises:
        ValueError: k_max < 1, zero-mass target or member, or a target
            outside the cone (run cone_hull_membership for the certificate).
    """
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    if mu0.total_mass <= 0.0:
        raise ValueError("the target measure must have positive mass")
    if any(m.total_mass <= 0.0 for m in family.members):
        raise ValueError("every family member needs positive mass for normalization")
    if cone_hull_membership(mu0, family, tol).verdict != "member":
        raise ValueError(
            "target is not in the family cone; see cone_hull_membership "
            "for the separating certificate"
        )
    target = mu0.weights / mu0.total_mass
    candidates = np.stack([m.weights / m.total_mass for m in family.members])
    masses = np.ones(len(family.members))
    return _greedy_trace(target, candidates, masses, k_max, weighted=False)


def weighted_cesaro_structured(
    mu0: FiniteMeasure, family: MeasureFamily, k_max: int, tol: float = 1e-9
) -> EquidistTrace:
    """Mass-weighted greedy sequence drawn from the structured base set.

    The running object is ``(sum_i mu_i) / (sum_i mu_i(X))`` over base-set
    picks, compared in sup norm to the normalized target.

    Raises:
        ValueError: missing structure, base measures outside the declared
            mass bounds, k_max < 1, or a target outside the base cone.
    """
    if family.structure is None:
        raise ValueError("weighted selection needs a structured family")
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    if mu0.total_mass <= 0.0:
        raise ValueError("the target measure must have positive mass")
    structure = family.structure
    low, high = structure.mass_bounds
    for i, m in enumerate(structure.base):
        if not (low <= m.total_mass <= high):
            raise ValueError(
                f"base measure {i} has mass {m.total_mass} outside [{low}, {high}]"
            )
    base_family = MeasureFamily(members=structure.base)
    if cone_hull_membership(mu0, base_family, tol).verdict != "member":
        raise ValueError(
            "target is not in the base-set cone; see cone_hull_membership "
            "for the separating certificate"
        )
    target = mu0.weights / mu0.total_mass
    candidates = np.stack([m.weights for m in structure.base])
    masses = np.array([m.total_mass for m in structure.base])
    return _greedy_trace(target, candidates, masses, k_max, weighted=True)


# ---------------------------------------------------------------------------
# Equivalence harness.
# ---------------------------------------------------------------------------


def _solve_exact(columns: list[list[Fraction]], b: list[Fraction]):
    """Unique exact solution of a full-column-rank system, or None."""
    m = len(b)
    k = len(columns)
    aug = [[columns[j][i] for j in range(k)] + [b[i]] for i in range(m)]
    row = 0
    pivots = []
    for col in range(k):
        pivot = next((r for r in range(row, m) if aug[r][col] != 0), None)
        if pivot is None:
            return None  # rank-deficient subset; a smaller subset covers it
        aug[row], aug[pivot] = aug[pivot], aug[row]
        piv = aug[row][col]
        aug[row] = [v / piv for v in aug[row]]
        for r in range(m):
            if r != row and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [v - factor * p for v, p in zip(aug[r], aug[row])]
        pivots.append(row)
        row += 1
        if row == m:
            break
    x = [aug[r][-1] for r in range(len(pivots))]
    # Consistency of the remaining rows.
    for r in range(row, m):
        if aug[r][-1] != 0:
            return None
    return x


def _bruteforce_member(mu0: FiniteMeasure, family: MeasureFamily) -> bool:
    """Conic Caratheodory oracle: search all generator subsets exactly."""
    b = _fractions(mu0.weights)
    if all(v == 0 for v in b):
        return True
    cols = [_fractions(m.weights) for m in family.members]
    indices = range(len(cols))
    max_size = min(len(cols), mu0.n)
    for size in range(1, max_size + 1):
        for subset in itertools.combinations(indices, size):
            x = _solve_exact([cols[j] for j in subset], b)
            if x is not None and all(v >= 0 for v in x):
                return True
    return False


@dataclass(frozen=True)
class HarnessReport:
    """Cross-check results over random instances of the equivalence."""

    trials: int
    member_count: int
    non_member_count: int
    inconsistencies: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.inconsistencies


def _random_instance(rng: np.random.Generator):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 6))
    members = []
    for _ in range(m):
        while True:
            w = rng.integers(0, 16, size=n) / 16.0
            if w.sum() > 0:
                break
        members.append(FiniteMeasure(w))
    family = MeasureFamily(members=tuple(members))
    if rng.random() < 0.5:
        while True:
            coeffs = rng.integers(0, 9, size=m) / 8.0
            mu0 = np.zeros(n)
            for c, mem in zip(coeffs, members):
                mu0 = mu0 + c * mem.weights  # dyadic grid keeps this exact
            if mu0.sum() > 0:
                break
    else:
        mu0 = rng.integers(1, 17, size=n) / 16.0
    return FiniteMeasure(mu0), family


def equivalence_harness(
    seed: int, trials: int, k_max: int = 10_000, cesaro_tol: float = 5e-2
) -> HarnessReport:
    """Cross-validate the four equivalent membership characterizations.

    Each trial draws a dyadic random instance (so float arithmetic is exact)
    and checks: the exact LP verdict against a subset-enumeration oracle;
    exact validity of whichever certificate was produced; on non-members,
    that the shifted functional violates condition ii); on members, that
    randomly sampled functionals satisfy condition i) and that both greedy
    Cesaro variants reach `cesaro_tol` by `k_max`.

    Raises:
        ValueError: trials < 1.
    """
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    inconsistencies: list[str] = []
    member_count = 0
    non_member_count = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        mu0, family = _random_instance(rng)
        certificate = cone_hull_membership(mu0, family, tol=1e-9)
        oracle = _bruteforce_member(mu0, family)
        verdict_member = certificate.verdict == "member"
        if verdict_member != oracle:
            inconsistencies.append(
                f"trial {trial}: LP says {certificate.verdict}, oracle says "
                f"{'member' if oracle else 'non_member'}"
            )
            continue
        if verdict_member:
            member_count += 1
            recon = np.zeros(mu0.n)
            for j, coeff in certificate.coefficients:
                recon = recon + coeff * family.members[j].weights
            if np.max(np.abs(recon - mu0.weights)) > 1e-9:
                inconsistencies.append(f"trial {trial}: member reconstruction defect")
            for _ in range(5):
                f = rng.standard_normal(mu0.n)
                if float(f @ mu0.weights) > 0.0:
                    f = -f
                if not condition_i_predicate(mu0, family, f):
                    inconsistencies.append(
                        f"trial {trial}: condition i) fails on a member instance"
                    )
            trace = cesaro_sequence(mu0, family, k_max)
            if trace.cesaro_errors[-1] >= cesaro_tol:
                inconsistencies.append(
                    f"trial {trial}: plain Cesaro error "
                    f"{trace.cesaro_errors[-1]:.3e} at k={k_max}"
                )
            base = tuple(m for m in family.members if m.total_mass > 0.0)
            masses = [m.total_mass for m in base]
            structured = MeasureFamily(
                members=family.members,
                structure=FamilyStructure(
                    base=base,
                    multiplicity_bound=1,
                    mass_bounds=(min(masses), max(masses)),
                ),
            )
            wtrace = weighted_cesaro_structured(mu0, structured, k_max)
            if wtrace.cesaro_errors[-1] >= cesaro_tol:
                inconsistencies.append(
                    f"trial {trial}: weighted Cesaro error "
                    f"{wtrace.cesaro_errors[-1]:.3e} at k={k_max}"
                )
        else:
            non_member_count += 1
            f = certificate.separating_f
            # The module verifies the sign conditions in exact rationals before
            # converting f to float; here allow roundoff on pairings whose
            # exact value is zero (boundary-touching members).
            pairing_noise = 1e-12 * (1.0 + float(np.max(np.abs(f))))
            if not (float(f @ mu0.weights) > 0.0) or any(
                float(f @ m.weights) > pairing_noise * (1.0 + m.total_mass)
                for m in family.members
            ):
                inconsistencies.append(f"trial {trial}: separating functional invalid")
            f0 = condition_ii_violator(mu0, f)
            pair0 = float(f0 @ mu0.weights)
            scale = 1.0 + float(np.abs(f) @ mu0.weights)
            if abs(pair0) > 1e-10 * scale:
                inconsistencies.append(
                    f"trial {trial}: ii)-violator does not annihilate the target"
                )
            for m in family.members:
                pairing = float(f0 @ m.weights)
                if m.total_mass > 0.0 and pairing <= 0.0:
                    inconsistencies.append(
                        f"trial {trial}: ii)-violator not positive on the family"
                    )
            try:
                cesaro_sequence(mu0, family, 10)
            except ValueError:
                pass
            else:
                inconsistencies.append(
                    f"trial {trial}: Cesaro accepted a non-member target"
                )
    return HarnessReport(
        trials=trials,
        member_count=member_count,
        non_member_count=non_member_count,
        inconsistencies=tuple(inconsistencies),
    )


# ---------------------------------------------------------------------------
# Instance and report I/O.
# ---------------------------------------------------------------------------


def save_instance(path: str, mu0: FiniteMeasure, family: MeasureFamily) -> None:
    """Write an instance as JSON with fields n, mu0, Y and optional structure."""
    payload: dict = {
        "n": mu0.n,
        "mu0": [float(v) for v in mu0.weights],
        "Y": [[float(v) for v in m.weights] for m in family.members],
    }
    if family.structure is not None:
        payload["structure"] = {
            "W": [[float(v) for v in m.weights] for m in family.structure.base],
            "multiplicity_bound": family.structure.multiplicity_bound,
            "mass_bounds": [float(v) for v in family.structure.mass_bounds],
        }
    atomic_write_text(path, json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def load_instance(path: str) -> tuple[FiniteMeasure, MeasureFamily]:
    """Read an instance written by save_instance."""
    with open(path, "r") as handle:
        payload = json.load(handle)
    mu0 = FiniteMeasure(np.asarray(payload["mu0"], dtype=float))
    if mu0.n != int(payload["n"]):
        raise ValueError(f"instance file {path}: n={payload['n']} but mu0 has {mu0.n}")
    members = tuple(FiniteMeasure(np.asarray(row, dtype=float)) for row in payload["Y"])
    structure = None
    if "structure" in payload:
        raw = payload["structure"]
        structure = FamilyStructure(
            base=tuple(
                FiniteMeasure(np.asarray(row, dtype=float)) for row in raw["W"]
            ),
            multiplicity_bound=int(raw["multiplicity_bound"]),
            mass_bounds=(float(raw["mass_bounds"][0]), float(raw["mass_bounds"][1])),
        )
    return mu0, MeasureFamily(members=members, structure=structure)


def write_certificate_json(certificate: MembershipCertificate, path: str) -> None:
    """Write a membership certificate as JSON."""
    payload = {
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
    atomic_write_text(path, json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def write_trace_csv(trace: EquidistTrace, path: str) -> None:
    """Write the Cesaro error curve as CSV with header ``k,error``."""
    lines = ["k,error"]
    for k, err in enumerate(trace.cesaro_errors, start=1):
        lines.append(f"{k},{format(err, '.17g')}")
    atomic_write_text(path, "\n".join(lines) + "\n")
