"""Construction of martingale-constraint measure families.

The building block is the two-point measure putting mass on one atom where a
random variable is nonpositive and one where it is positive, weighted so the
variable has expectation zero. Mixing two-point measures over all such atom
pairs yields every equivalent measure with that zero-expectation property;
taking per-step products yields the measure families whose extreme points
drive the super-hedge pricer and the decomposition engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .finite_space import (
    DEFAULT_TOL,
    AdaptedProcess,
    AtomSpace,
    Filtration,
    Measure,
    RandomVariable,
    conditional_expectation,
    tv_metric,
)


@dataclass(frozen=True)
class TwoPointMeasureSpec:
    """A (nonpositive, positive) atom pair with the variable's magnitudes there.

    ``loss`` is the magnitude of the nonpositive value at ``neg_atom`` and
    ``gain`` the positive value at ``pos_atom``.
    """

    neg_atom: int
    pos_atom: int
    loss: float
    gain: float

    def __post_init__(self):
        if self.neg_atom == self.pos_atom:
            raise ValidationError("two-point atoms must be distinct")
        if self.gain <= 0.0:
            raise ValidationError("gain must be positive")
        if self.loss < 0.0:
            raise ValidationError("loss must be nonnegative")


def two_point_measure(spec: TwoPointMeasureSpec, atom_count: int) -> Measure:
    """Measure with mass gain/(loss+gain) at neg_atom, loss/(loss+gain) at pos_atom.

    The variable equal to -loss at neg_atom and +gain at pos_atom then has
    expectation exactly zero. With loss == 0 the mass degenerates onto the
    neg_atom; such measures are closure points, flagged not strictly positive.
    """
    total = spec.loss + spec.gain
    if total <= 0.0:
        raise ValidationError("loss + gain must be positive")
    if not (0 <= spec.neg_atom < atom_count and 0 <= spec.pos_atom < atom_count):
        raise ValidationError("atom index outside the space")
    w = np.zeros(atom_count)
    w[spec.neg_atom] = spec.gain / total
    w[spec.pos_atom] = spec.loss / total
    return Measure(w)


def sign_split(xi: RandomVariable) -> tuple[np.ndarray, np.ndarray]:
    """Indices where xi <= 0 and where xi > 0; both parts must be inhabited.

    The nonpositive part must contain a strictly negative value, otherwise no
    equivalent measure can have zero expectation of xi.
    """
    vals = xi.values
    neg = np.flatnonzero(vals <= 0.0)
    pos = np.flatnonzero(vals > 0.0)
    if pos.size == 0 or not np.any(vals < 0.0):
        raise ValidationError("variable must take both signs")
    return neg, pos


def uniform_alpha(p: Measure, xi: RandomVariable) -> np.ndarray:
    """Constant mixing density over the (neg x pos) pair grid, normalised.

    Normalisation is with respect to the product weights p(neg) x p(pos), the
    discrete analogue of the product reference measure on the pair space.
    """
    neg, pos = sign_split(xi)
    total = float(p.weights[neg].sum() * p.weights[pos].sum())
    if total <= 0.0:
        raise ValidationError("reference measure puts no mass on one sign class")
    return np.full((neg.size, pos.size), 1.0 / total)


def _pair_system(p: Measure, xi: RandomVariable, alpha: np.ndarray, tol: float):
    neg, pos = sign_split(xi)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (neg.size, pos.size):
        raise ValidationError(
            f"alpha must have shape {(neg.size, pos.size)}, got {alpha.shape}"
        )
    if np.any(alpha < 0.0):
        raise ValidationError("alpha must be nonnegative")
    loss = -xi.values[neg]          # >= 0 on the nonpositive part
    gain = xi.values[pos]           # > 0
    pair_mass = alpha * np.outer(p.weights[neg], p.weights[pos])
    if abs(float(pair_mass.sum()) - 1.0) > tol:
        raise ValidationError(
            f"alpha not normalised: pair mass sums to {pair_mass.sum()!r}"
        )
    denom = loss[:, None] + gain[None, :]
    return neg, pos, loss, gain, pair_mass, denom


def zero_expectation_measure(
    p: Measure, xi: RandomVariable, alpha: np.ndarray, tol: float = DEFAULT_TOL
) -> Measure:
    """Mixture of two-point measures over the (neg x pos) pair grid.

    ``alpha[i, j]`` is the mixing density at the pair (neg atom i, pos atom j),
    normalised so that sum(alpha * p(neg) x p(pos)) == 1. Every such measure
    satisfies E[xi] == 0; it is strictly positive whenever alpha is strictly
    positive on the whole grid.
    """
    if p.size != xi.size:
        raise ValidationError("measure and variable sizes differ")
    neg, pos, loss, gain, pair_mass, denom = _pair_system(p, xi, alpha, tol)
    w = np.zeros(p.size)
    np.add.at(w, neg, (pair_mass * (gain[None, :] / denom)).sum(axis=1))
    np.add.at(w, pos, (pair_mass * (loss[:, None] / denom)).sum(axis=0))
    return Measure(w)


@dataclass(frozen=True)
class CanonicalMixing:
    """Canonical pair density of a zero-expectation measure.

    ``neg_profile``/``pos_profile`` are the measure's densities with respect
    to p on the two sign classes; ``scale`` is the common value of the two
    cross moments that normalise the canonical density.
    """

    alpha: np.ndarray
    neg_profile: np.ndarray
    pos_profile: np.ndarray
    scale: float


def canonical_mixing(
    p: Measure, xi: RandomVariable, alpha: np.ndarray, tol: float = DEFAULT_TOL
) -> CanonicalMixing:
    """Reduce any admissible mixing density to its canonical rank-one form.

    The canonical density factorises through the two marginal profiles; the
    two ways of computing the normalising scale (loss moment on the negative
    part, gain moment on the positive part) must agree, which is asserted.
    Rebuilding the measure from the canonical density reproduces it atomwise.
    """
    neg, pos, loss, gain, pair_mass, denom = _pair_system(p, xi, alpha, tol)
    psi_neg = (alpha * (gain[None, :] / denom) * p.weights[pos][None, :]).sum(axis=1)
    psi_pos = (alpha * (loss[:, None] / denom) * p.weights[neg][:, None]).sum(axis=0)
    d_neg = float((loss * psi_neg * p.weights[neg]).sum())
    d_pos = float((gain * psi_pos * p.weights[pos]).sum())
    if abs(d_neg - d_pos) > max(tol, tol * abs(d_pos)):
        raise ValidationError(f"canonical scale mismatch: {d_neg} vs {d_pos}")
    if d_pos <= 0.0:
        raise ValidationError("degenerate mixing density: zero canonical scale")
    alpha1 = np.outer(psi_neg, psi_pos) * denom / d_pos
    return CanonicalMixing(alpha=alpha1, neg_profile=psi_neg, pos_profile=psi_pos, scale=d_pos)


def unit_expectation_measure(
    p: Measure, xi0: RandomVariable, alpha: np.ndarray, tol: float = DEFAULT_TOL
) -> Measure:
    """Measure with E[xi0] == 1 for a nonnegative xi0, via the shift xi0 - 1."""
    if np.any(xi0.values < 0.0):
        raise ValidationError("xi0 must be nonnegative")
    shifted = RandomVariable(xi0.values - 1.0)
    q = zero_expectation_measure(p, shifted, alpha, tol)
    err = abs(q.expectation(xi0) - 1.0)
    if err > max(tol, 10 * tol):
        raise ValidationError(f"unit-expectation identity off by {err}")
    return q


def conditional_zero_family(
    p: Measure,
    xi: RandomVariable,
    blocks: Sequence[Sequence[int]],
    per_block_alpha: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
) -> Measure:
    """Measure with zero conditional expectation of xi on every given block.

    Each block with positive p-mass receives its own two-point mixture,
    built from the block-conditional reference measure, then scaled back by
    the block mass. xi must take both signs within every block; otherwise the
    conditional constraint is unattainable for an equivalent measure.
    """
    if len(blocks) != len(per_block_alpha):
        raise ValidationError("need one alpha per block")
    flat = sorted(i for b in blocks for i in b)
    if flat != list(range(p.size)):
        raise ValidationError("blocks must partition the atom indices")
    w = np.zeros(p.size)
    for b_id, (block, alpha) in enumerate(zip(blocks, per_block_alpha)):
        idx = np.fromiter(block, dtype=np.int64)
        mass = float(p.weights[idx].sum())
        if mass <= 0.0:
            raise ValidationError(f"block {b_id} has zero reference mass")
        sub_p = Measure(p.weights[idx] / mass, strictly_positive=None)
        sub_xi = RandomVariable(xi.values[idx])
        try:
            sub_q = zero_expectation_measure(sub_p, sub_xi, alpha, tol)
        except ValidationError as exc:
            raise ValidationError(f"block {b_id}: {exc}") from exc
        w[idx] = mass * sub_q.weights
    return Measure(w)


def consistency_measure(
    q1: Measure,
    q2: Measure,
    filtration: Filtration,
    s: int,
    k: int,
    tol: float = 1e-10,
) -> Measure:
    """Reweighting of q1 by the ratio of conditional density expectations.

    The density with respect to q1 is E[dq2/dq1 | time k] / E[dq2/dq1 | time s]
    for s <= k. Its conditional expectation given time s under q1 equals one,
    which makes the result a probability measure; that identity is verified.
    """
    if not (q1.strictly_positive and q2.strictly_positive):
        raise ValidationError("consistency reweighting needs strictly positive measures")
    s = filtration.check_time(s)
    k = filtration.check_time(k)
    if s > k:
        raise ValidationError("need s <= k")
    ratio = RandomVariable(q2.density_wrt(q1))
    num = conditional_expectation(q1, ratio, filtration, k)[filtration.block_index(k)]
    den = conditional_expectation(q1, ratio, filtration, s)[filtration.block_index(s)]
    density = num / den
    check = conditional_expectation(
        q1, RandomVariable(density), filtration, s
    )
    if np.max(np.abs(check - 1.0)) > tol:
        raise ValidationError("density ratio failed its unit conditional expectation")
    return Measure(q1.weights * density)


class MeasureSet:
    """A finite measure family given by its extreme points.

    ``target`` is the nonnegative variable with unit expectation under every
    member; each extreme point must satisfy that identity to within ``tol``.
    Extreme points may be degenerate (closure points); mixtures with interior
    weights restore strict positivity when the supports cover all atoms.
    """

    def __init__(
        self,
        reference: Measure,
        target: RandomVariable,
        extremes: Sequence[Measure],
        mixtures_allowed: bool = True,
        complete: bool = False,
        tol: float = DEFAULT_TOL,
    ):
        if len(extremes) == 0:
            raise ValidationError("need at least one extreme point")
        if reference.size != target.size:
            raise ValidationError("reference and target sizes differ")
        for i, q in enumerate(extremes):
            if q.size != reference.size:
                raise ValidationError(f"extreme {i} has wrong atom count")
            err = abs(q.expectation(target) - 1.0)
            if err > tol:
                raise ValidationError(f"extreme {i}: E[target] off by {err}")
        self.reference = reference
        self.target = target
        self.extremes: tuple[Measure, ...] = tuple(extremes)
        self.mixtures_allowed = bool(mixtures_allowed)
        self.complete = bool(complete)

    @property
    def atom_count(self) -> int:
        return self.reference.size

    def __len__(self) -> int:
        return len(self.extremes)


def mixture_measure(mset: MeasureSet, weights: Sequence[float]) -> Measure:
    """Convex combination of the set's extreme points."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(mset.extremes),):
        raise ValidationError(f"need {len(mset.extremes)} mixture weights")
    if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > DEFAULT_TOL:
        raise ValidationError("mixture weights must be nonnegative and sum to 1")
    out = np.zeros(mset.atom_count)
    for wi, q in zip(w, mset.extremes):
        out += wi * q.weights
    return Measure(out)


class ProductRegularSpec:
    """N-step product family: target = prod over steps of (1 + exposure * excess).

    ``excess[i]`` holds the step-i excess values over that step's atom factor
    and must take both signs (a strict negative and a strict positive).
    ``exposures[i]`` is the predictable loading on step i: a scalar or one
    value per block of the time-(i-1) partition, in (0, 1]. ``step_probs[i]``
    is the strictly positive per-factor reference law (uniform by default).
    """

    def __init__(
        self,
        excess: Sequence[Sequence[float]],
        exposures: Sequence[float | Sequence[float]] | None = None,
        step_probs: Sequence[Sequence[float]] | None = None,
    ):
        self.excess = tuple(np.asarray(e, dtype=float) for e in excess)
        if len(self.excess) < 1:
            raise ValidationError("need at least one step")
        for i, e in enumerate(self.excess):
            if e.ndim != 1 or e.size < 2:
                raise ValidationError(f"step {i}: factor needs at least two atoms")
            if not (np.any(e > 0.0) and np.any(e < 0.0)):
                raise ValidationError(f"step {i}: excess must take both signs")
        self.factor_sizes = tuple(int(e.size) for e in self.excess)
        n = len(self.excess)

        if step_probs is None:
            self.step_probs = tuple(
                np.full(s, 1.0 / s) for s in self.factor_sizes
            )
        else:
            if len(step_probs) != n:
                raise ValidationError("need one probability vector per step")
            self.step_probs = tuple(np.asarray(p, dtype=float) for p in step_probs)
            for i, p in enumerate(self.step_probs):
                if p.shape != (self.factor_sizes[i],):
                    raise ValidationError(f"step {i}: wrong probability length")
                if np.any(p <= 0.0) or abs(float(p.sum()) - 1.0) > DEFAULT_TOL:
                    raise ValidationError(f"step {i}: probabilities invalid")

        prefix_sizes = [1]
        for s in self.factor_sizes[:-1]:
            prefix_sizes.append(prefix_sizes[-1] * s)
        if exposures is None:
            exposures = [1.0] * n
        if len(exposures) != n:
            raise ValidationError("need one exposure per step")
        cleaned = []
        for i, a in enumerate(exposures):
            arr = np.asarray(a, dtype=float)
            if arr.ndim == 0:
                arr = np.full(prefix_sizes[i], float(arr))
            if arr.shape != (prefix_sizes[i],):
                raise ValidationError(
                    f"step {i}: exposure needs {prefix_sizes[i]} prefix values"
                )
            if np.any(arr <= 0.0) or np.any(arr > 1.0):
                raise ValidationError(f"step {i}: exposures must lie in (0, 1]")
            cleaned.append(arr)
        self.exposures = tuple(cleaned)

    @property
    def n_steps(self) -> int:
        return len(self.excess)


class ProductMarket:
    """Materialised product space for a :class:`ProductRegularSpec`.

    Atoms are tuples of per-step factor atoms in mixed-radix order with the
    first step slowest, so the time-n partition blocks are contiguous runs.
    Carries the product reference measure, the target variable and its
    running martingale values.
    """

    def __init__(self, spec: ProductRegularSpec):
        self.spec = spec
        sizes = spec.factor_sizes
        n = spec.n_steps
        atom_count = int(np.prod(sizes))

        partitions = []
        for t in range(n + 1):
            run = int(np.prod(sizes[t:])) if t < n else 1
            blocks = [
                tuple(range(b * run, (b + 1) * run))
                for b in range(atom_count // run)
            ]
            partitions.append(blocks)
        self.filtration = Filtration(atom_count, partitions)
        self.space = AtomSpace.of_size(atom_count)

        grids = np.indices(sizes).reshape(n, atom_count)  # step coordinates per atom
        self.coordinates = grids

        ref = np.ones(atom_count)
        for i in range(n):
            ref *= spec.step_probs[i][grids[i]]
        self.reference = Measure(ref)

        # Running products of the per-step factors give the target and its
        # conditional expectations at every time in one pass.
        factor_atom = np.empty((n, atom_count))
        for i in range(n):
            prefix_block = self.filtration.block_index(i)
            factor_atom[i] = 1.0 + spec.exposures[i][prefix_block] * spec.excess[i][grids[i]]
        running = np.ones(atom_count)
        martingale_vals = [np.ones(1)]
        for i in range(n):
            running = running * factor_atom[i]
            blocks = self.filtration.blocks(i + 1)
            martingale_vals.append(np.array([running[b[0]] for b in blocks]))
        if np.any(running < 0.0):
            raise ValidationError("target is negative on some atom; shrink exposures")
        self.target = RandomVariable(running)
        self.martingale = AdaptedProcess(tuple(martingale_vals))

    def step_pairs(self, step: int) -> list[tuple[int, int]]:
        """All (nonpositive, positive) factor-atom pairs available at a step."""
        e = self.spec.excess[step]
        neg = np.flatnonzero(e <= 0.0)
        pos = np.flatnonzero(e > 0.0)
        return [(int(i), int(j)) for i in neg for j in pos]


def build_product_market(spec: ProductRegularSpec) -> ProductMarket:
    return ProductMarket(spec)


def build_product_regular_set(
    market: ProductMarket,
    pair_grids: Sequence[Sequence[tuple[int, int]]] | None = None,
) -> MeasureSet:
    """Measure family whose extremes are products of per-step two-point measures.

    ``pair_grids[i]`` lists the (nonpositive, positive) factor-atom pairs used
    at step i; the default is every available pair, which makes the family
    complete. Every extreme point gives the target unit expectation and the
    same conditional expectations, namely the market's running martingale.
    """
    spec = market.spec
    n = spec.n_steps
    if pair_grids is None:
        pair_grids = [market.step_pairs(i) for i in range(n)]
        complete = True
    else:
        if len(pair_grids) != n:
            raise ValidationError("need one pair grid per step")
        complete = all(
            set(map(tuple, pair_grids[i])) == set(market.step_pairs(i)) for i in range(n)
        )

    step_factors: list[list[np.ndarray]] = []
    for i in range(n):
        e = spec.excess[i]
        factors = []
        for (a_neg, a_pos) in pair_grids[i]:
            if not (e[a_neg] <= 0.0 < e[a_pos]):
                raise ValidationError(f"step {i}: pair ({a_neg}, {a_pos}) has wrong signs")
            w = np.zeros(spec.factor_sizes[i])
            loss, gain = -e[a_neg], e[a_pos]
            w[a_neg] += gain / (loss + gain)
            w[a_pos] += loss / (loss + gain)
            factors.append(w)
        if not factors:
            raise ValidationError(f"step {i}: empty pair grid")
        step_factors.append(factors)

    extremes = []
    coords = market.coordinates
    for choice in np.ndindex(*[len(f) for f in step_factors]):
        w = np.ones(market.filtration.atom_count)
        for i in range(n):
            w *= step_factors[i][choice[i]][coords[i]]
        extremes.append(Measure(w / w.sum() if abs(w.sum() - 1.0) > DEFAULT_TOL else w))

    return MeasureSet(
        reference=market.reference,
        target=market.target,
        extremes=extremes,
        mixtures_allowed=True,
        complete=complete,
    )


def closure_witness(
    p: Measure,
    xi: RandomVariable,
    pair: TwoPointMeasureSpec,
    epsilon: float,
) -> tuple[Measure, float]:
    """Equivalent measure within 4*epsilon of a given two-point measure.

    Concentrates mixing mass 1 - epsilon on the chosen pair and spreads
    epsilon uniformly over the remaining pairs, so the result stays strictly
    positive (given a strictly positive p and a full pair grid) while its
    distance to the two-point target is at most 4*epsilon. Returns the witness
    and the measured distance.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValidationError("epsilon must lie in (0, 1)")
    if not p.strictly_positive:
        raise ValidationError("reference measure must be strictly positive")
    neg, pos = sign_split(xi)
    neg_list, pos_list = list(neg), list(pos)
    if pair.neg_atom not in neg_list or pair.pos_atom not in pos_list:
        raise ValidationError("pair atoms do not match the sign classes of xi")
    i0, j0 = neg_list.index(pair.neg_atom), pos_list.index(pair.pos_atom)
    if abs(-xi.values[pair.neg_atom] - pair.loss) > DEFAULT_TOL or abs(
        xi.values[pair.pos_atom] - pair.gain
    ) > DEFAULT_TOL:
        raise ValidationError("pair loss/gain inconsistent with xi")

    pair_weights = np.outer(p.weights[neg], p.weights[pos])
    rest = float(pair_weights.sum() - pair_weights[i0, j0])
    if rest <= 0.0:
        raise ValidationError("need at least two candidate pairs to spread epsilon")
    alpha = np.full(pair_weights.shape, epsilon / rest)
    alpha[i0, j0] = (1.0 - epsilon) / pair_weights[i0, j0]

    witness = zero_expectation_measure(p, xi, alpha)
    target = two_point_measure(pair, p.size)
    distance = tv_metric(witness, target)
    if distance > 4.0 * epsilon + DEFAULT_TOL:
        raise ValidationError(f"closure bound violated: {distance} > 4*{epsilon}")
    return witness, distance
