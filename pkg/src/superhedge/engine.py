"""Super-martingale analysis relative to a measure family.

Validation of the (super-)martingale property over the family's extreme
points, the per-step hedge coefficient that bounds a value ratio by an affine
function of the family martingale's increment, the certificate built from
those coefficients, and the optional decomposition (martingale part minus
nondecreasing compensator) the certificate induces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, ValidationError
from .finite_space import (
    DEFAULT_TOL,
    AdaptedProcess,
    Filtration,
    Measure,
    RandomVariable,
    masked_conditional_expectation,
)
from .measure_sets import MeasureSet


@dataclass(frozen=True)
class SupermartingaleReport:
    """Outcome of a (super-)martingale check with its worst violation."""

    ok: bool
    worst_excess: float
    where: tuple[int, int, int, int] | None  # (extreme, k, m, block)

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class HedgeCertificate:
    """Per-step ratio bounds certifying local regularity.

    ``ratio_bounds[n-1]`` is the atom-level variable 1 + coeff * (m_n - m_{n-1})
    dominating the shifted process ratio over step n; ``coefficients[n-1]``
    holds one scalar per block of the time-(n-1) partition. ``shift`` is the
    constant added to the process before taking ratios (0 when the process is
    already positive).
    """

    ratio_bounds: tuple[RandomVariable, ...]
    coefficients: tuple[np.ndarray, ...]
    shift: float


@dataclass(frozen=True)
class Decomposition:
    """Optional decomposition f = martingale_part - compensator.

    The compensator starts at zero and is pathwise nondecreasing; the
    martingale part is a martingale under every measure of the family.
    """

    martingale_part: AdaptedProcess
    compensator: AdaptedProcess


def set_martingale(mset: MeasureSet, filtration: Filtration, tol: float = 1e-10) -> AdaptedProcess:
    """Conditional expectations of the set's target, one value per block.

    The value must not depend on which member measure computes it; that
    agreement across extreme points (on blocks they charge) is what makes the
    family usable, and is verified here.
    """
    return _common_conditional(mset, filtration, mset.target, tol,
                               context="target martingale")


def _common_conditional(
    mset: MeasureSet,
    filtration: Filtration,
    x: RandomVariable,
    tol: float,
    context: str,
) -> AdaptedProcess:
    values = []
    for n in range(filtration.n_steps + 1):
        agg = np.full(filtration.block_count(n), np.nan)
        covered = np.zeros(filtration.block_count(n), dtype=bool)
        for q in mset.extremes:
            vals, mask = masked_conditional_expectation(q, x, filtration, n)
            fresh = mask & ~covered
            agg[fresh] = vals[fresh]
            both = mask & covered
            if np.any(np.abs(vals[both] - agg[both]) > tol):
                worst = float(np.max(np.abs(vals[both] - agg[both])))
                raise InvariantViolation(
                    f"{context}: conditional expectation at time {n} is "
                    f"measure-dependent (spread {worst})"
                )
            covered |= mask
        if not np.all(covered):
            raise InvariantViolation(
                f"{context}: no extreme measure charges block "
                f"{int(np.flatnonzero(~covered)[0])} at time {n}"
            )
        values.append(agg)
    return AdaptedProcess(tuple(values))


def is_supermartingale(
    f: AdaptedProcess,
    mset: MeasureSet,
    filtration: Filtration,
    tol: float = DEFAULT_TOL,
) -> SupermartingaleReport:
    """Check E[f_m | time k] <= f_k for all k <= m over every extreme point.

    Checking the extremes suffices: a mixture's conditional expectation of a
    fixed variable is a convex combination of the extremes' values on every
    block the mixture charges. Blocks an extreme does not charge are skipped
    for that extreme. Returns the worst signed excess found.
    """
    f.check_against(filtration)
    worst = -np.inf
    where = None
    for qi, q in enumerate(mset.extremes):
        for m in range(1, filtration.n_steps + 1):
            x = RandomVariable(f.at_atoms(filtration, m))
            for k in range(m):
                vals, mask = masked_conditional_expectation(q, x, filtration, k)
                excess = vals[mask] - f.values[k][mask]
                if excess.size and float(np.max(excess)) > worst:
                    worst = float(np.max(excess))
                    block = int(np.flatnonzero(mask)[int(np.argmax(excess))])
                    where = (qi, k, m, block)
    ok = worst <= tol
    return SupermartingaleReport(ok=ok, worst_excess=worst, where=None if ok else where)


def is_martingale(
    f: AdaptedProcess,
    mset: MeasureSet,
    filtration: Filtration,
    tol: float = DEFAULT_TOL,
) -> bool:
    """Equality version of the super-martingale check, via two routes.

    Route one demands |E[f_m | time k] - f_k| <= tol everywhere. Route two
    uses the criterion that a super-martingale with constant expectations is
    a martingale: the super-martingale check plus |E[f_m] - f_0| <= m * tol
    (the looser bound absorbs per-step tolerance accumulation). The routes
    must agree.
    """
    f.check_against(filtration)
    direct = True
    for q in mset.extremes:
        for m in range(1, filtration.n_steps + 1):
            x = RandomVariable(f.at_atoms(filtration, m))
            for k in range(m):
                vals, mask = masked_conditional_expectation(q, x, filtration, k)
                if np.any(np.abs(vals[mask] - f.values[k][mask]) > tol):
                    direct = False

    via_lemma = bool(is_supermartingale(f, mset, filtration, tol))
    f0 = float(f.values[0][0])
    for q in mset.extremes:
        for m in range(1, filtration.n_steps + 1):
            em = q.expectation(f.at_atoms(filtration, m))
            if abs(em - f0) > tol * m:
                via_lemma = False
    if direct and not via_lemma:
        raise InvariantViolation("martingale routes disagree (direct yes, criterion no)")
    return direct


def esssup_process(
    xi: RandomVariable,
    mset: MeasureSet,
    filtration: Filtration,
) -> AdaptedProcess:
    """Blockwise maximum over extremes of the conditional expectation of xi.

    With finitely many extreme points this realises the pointwise supremum of
    conditional expectations over the whole family, and it dominates every
    member's conditional expectation by construction. The result is itself a
    super-martingale relative to the family when the per-block maximiser does
    not vary across blocks within a step (always the case for one-step
    families, families whose extremes share their continuation factors, and
    variables with measure-independent conditionals such as the family
    target); a finite family generally lacks the reweighting closure that
    would force the property for arbitrary payoffs.
    """
    if np.any(xi.values < 0.0):
        raise ValidationError("esssup process is defined for nonnegative payoffs")
    if xi.size != filtration.atom_count:
        raise ValidationError("payoff size does not match the space")
    values = []
    for n in range(filtration.n_steps + 1):
        agg = np.full(filtration.block_count(n), -np.inf)
        covered = np.zeros(filtration.block_count(n), dtype=bool)
        for q in mset.extremes:
            vals, mask = masked_conditional_expectation(q, xi, filtration, n)
            agg[mask] = np.maximum(agg[mask], vals[mask])
            covered |= mask
        if not np.all(covered):
            raise InvariantViolation(
                f"no extreme measure charges block "
                f"{int(np.flatnonzero(~covered)[0])} at time {n}"
            )
        values.append(agg)
    return AdaptedProcess(tuple(values))


def hedge_alpha(ratio: np.ndarray, dm: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """Scalar a with ratio <= 1 + a * dm pointwise over one block.

    ``ratio`` is the one-step value ratio (nonnegative) and ``dm`` the family
    martingale's increment at the block's atoms. When atoms with dm < 0
    exist, a = min over them of (1 - ratio) / (-dm); that choice is tight on
    the negative side and the two-point expectation bounds force the positive
    side. The sign of a is free: values above 1 where dm < 0 simply push a
    negative. Without negative atoms a is the smallest nonnegative slope that
    covers the positive side. Feasibility is verified pointwise and failure
    means the ratio violates its expectation bound, i.e. the process is not a
    super-martingale step relative to the family.
    """
    ratio = np.asarray(ratio, dtype=float)
    dm = np.asarray(dm, dtype=float)
    if ratio.shape != dm.shape or ratio.ndim != 1:
        raise ValidationError("ratio and dm must be equal-length vectors")
    if np.any(ratio < -tol):
        raise ValidationError("ratio must be nonnegative")

    neg = dm < 0.0
    pos = dm > 0.0
    if np.any(neg):
        a = float(np.min((1.0 - ratio[neg]) / (-dm[neg])))
    elif np.any(pos):
        a = max(0.0, float(np.max((ratio[pos] - 1.0) / dm[pos])))
    else:
        a = 0.0

    slack = 1.0 + a * dm - ratio
    if float(np.min(slack)) < -tol:
        worst = int(np.argmin(slack))
        raise InvariantViolation(
            f"no feasible hedge coefficient: atom {worst} exceeds the affine "
            f"bound by {-float(slack[worst])}"
        )
    return a


def local_regularity_certificate(
    f: AdaptedProcess,
    mset: MeasureSet,
    filtration: Filtration,
    tol: float = 1e-10,
) -> HedgeCertificate:
    """Per-step ratio bounds 1 + a_n * (m_n - m_{n-1}) dominating f_n / f_{n-1}.

    The process is shifted by 1 + max(0, -min f) first if it is not strictly
    positive; the shift is recorded on the certificate and undone by
    :func:`optional_decomposition`. Requires f to pass the super-martingale
    check. Each bound has unit conditional expectation under every family
    member because the coefficients multiply a martingale increment.
    """
    f.check_against(filtration)
    report = is_supermartingale(f, mset, filtration, tol=max(DEFAULT_TOL, tol))
    if not report:
        raise InvariantViolation(
            f"process is not a super-martingale for this family "
            f"(worst excess {report.worst_excess} at {report.where})"
        )
    m = set_martingale(mset, filtration, tol=tol)

    fmin = min(float(np.min(v)) for v in f.values)
    shift = 0.0 if fmin > 0.0 else 1.0 + max(0.0, -fmin)

    ratio_bounds: list[RandomVariable] = []
    coefficients: list[np.ndarray] = []
    for n in range(1, filtration.n_steps + 1):
        f_now = f.at_atoms(filtration, n) + shift
        f_prev_blocks = f.values[n - 1] + shift
        m_now = m.at_atoms(filtration, n)
        m_prev_blocks = m.values[n - 1]
        coeffs = np.empty(filtration.block_count(n - 1))
        bound_atoms = np.empty(filtration.atom_count)
        for b_id, block in enumerate(filtration.blocks(n - 1)):
            idx = np.fromiter(block, dtype=np.int64)
            ratio = f_now[idx] / f_prev_blocks[b_id]
            dm = m_now[idx] - m_prev_blocks[b_id]
            try:
                a = hedge_alpha(ratio, dm, tol=tol)
            except InvariantViolation as exc:
                raise InvariantViolation(f"step {n}, block {b_id}: {exc}") from exc
            coeffs[b_id] = a
            bound_atoms[idx] = 1.0 + a * dm
        ratio_bounds.append(RandomVariable(bound_atoms))
        coefficients.append(coeffs)
    return HedgeCertificate(
        ratio_bounds=tuple(ratio_bounds),
        coefficients=tuple(coefficients),
        shift=shift,
    )


def optional_decomposition(
    f: AdaptedProcess,
    mset: MeasureSet,
    filtration: Filtration,
    tol: float = 1e-10,
) -> Decomposition:
    """Split f into a family martingale minus a nondecreasing compensator.

    With the certificate's bounds b_n, the martingale part accumulates
    f_{n-1} * (b_n - 1) on top of f_0 and the compensator accumulates
    f_{n-1} * b_n - f_n >= 0. Tiny negative increments (within tol) are
    clamped to zero; anything worse is an error. The identity
    f = martingale_part - compensator and the martingale property of the
    first part are verified before returning.
    """
    cert = local_regularity_certificate(f, mset, filtration, tol=tol)
    shift = cert.shift

    f_atoms = [f.at_atoms(filtration, n) + shift for n in range(filtration.n_steps + 1)]
    mart = [f_atoms[0].copy()]
    comp = [np.zeros(filtration.atom_count)]
    for n in range(1, filtration.n_steps + 1):
        bound = cert.ratio_bounds[n - 1].values
        increment_m = f_atoms[n - 1] * (bound - 1.0)
        increment_g = f_atoms[n - 1] * bound - f_atoms[n]
        if float(np.min(increment_g)) < -tol:
            raise InvariantViolation(
                f"compensator increment at step {n} is negative beyond tolerance"
            )
        increment_g = np.maximum(increment_g, 0.0)
        mart.append(mart[-1] + increment_m)
        comp.append(comp[-1] + increment_g)

    martingale_part = AdaptedProcess.from_atom_values(
        filtration, [v - shift for v in mart], tol=max(tol, 1e-9)
    )
    compensator = AdaptedProcess.from_atom_values(filtration, comp, tol=max(tol, 1e-9))

    for n in range(filtration.n_steps + 1):
        resid = np.max(
            np.abs(
                f.at_atoms(filtration, n)
                - martingale_part.at_atoms(filtration, n)
                + compensator.at_atoms(filtration, n)
            )
        )
        if resid > tol:
            raise InvariantViolation(f"decomposition identity off by {resid} at time {n}")
    if not is_martingale(martingale_part, mset, filtration, tol=tol):
        raise InvariantViolation("martingale part failed the martingale check")
    return Decomposition(martingale_part=martingale_part, compensator=compensator)


def class_K_generate(
    f_dec: AdaptedProcess,
    xi: RandomVariable,
    mset: MeasureSet,
    filtration: Filtration,
    tol: float = 1e-10,
) -> AdaptedProcess:
    """Product of a pathwise nonincreasing process with a unit-mean variable's martingale.

    xi must be nonnegative with unit expectation under every extreme point and
    measure-independent conditional expectations (detected otherwise); the
    product is then a super-martingale relative to the family.
    """
    f_dec.check_against(filtration)
    if np.any(xi.values < 0.0):
        raise ValidationError("xi must be nonnegative")
    for q in mset.extremes:
        if abs(q.expectation(xi) - 1.0) > DEFAULT_TOL:
            raise ValidationError("xi does not have unit expectation under every extreme")
    for n in range(1, filtration.n_steps + 1):
        drop = f_dec.at_atoms(filtration, n) - f_dec.at_atoms(filtration, n - 1)
        if float(np.max(drop)) > DEFAULT_TOL:
            raise ValidationError("process must be pathwise nonincreasing")
    nmart = _common_conditional(mset, filtration, xi, tol, context="unit-mean factor")
    values = tuple(f_dec.values[n] * nmart.values[n] for n in range(filtration.n_steps + 1))
    return AdaptedProcess(values)


def superhedge_supermartingale(
    payoff: RandomVariable,
    alpha0: float,
    mset: MeasureSet,
    filtration: Filtration,
    tol: float = DEFAULT_TOL,
) -> AdaptedProcess:
    """Scaled family martingale that drops onto a dominated terminal payoff.

    Requires payoff <= alpha0 * m_N atomwise (alpha0 too small is an error);
    the process equals alpha0 * m_n before the horizon and the payoff at it,
    hence is a super-martingale admitting the optional decomposition.
    """
    m = set_martingale(mset, filtration)
    horizon = filtration.n_steps
    pay_blocks = AdaptedProcess.from_atom_values(
        filtration,
        [np.zeros(filtration.atom_count)] * horizon + [np.asarray(payoff.values)],
        tol=tol,
    ).values[horizon]
    gap = payoff.values - alpha0 * m.at_atoms(filtration, horizon)
    if float(np.max(gap)) > tol:
        raise ValidationError(
            f"domination fails: payoff exceeds alpha0 * martingale by {float(np.max(gap))}"
        )
    values = [alpha0 * m.values[n] for n in range(horizon)] + [pay_blocks]
    return AdaptedProcess(tuple(values))
