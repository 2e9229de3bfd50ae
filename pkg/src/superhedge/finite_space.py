"""Finite filtered probability spaces.

Atoms, refining partition sequences, strictly positive measures, adapted
processes, conditional expectation and the total-variation metric. Everything
downstream (measure families, decompositions, the pricer's scenario markets)
is built on these types.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

#: Default absolute tolerance for the library's exact identities.
DEFAULT_TOL = 1e-12

#: Weights above this floor count as strictly positive.
POSITIVITY_FLOOR = 1e-15


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AtomSpace:
    """Finite set of elementary outcomes with opaque, unique labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValidationError("atom space needs at least one atom")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("atom labels must be unique")

    @classmethod
    def of_size(cls, n: int, prefix: str = "w") -> "AtomSpace":
        if n < 1:
            raise ValidationError("atom count must be >= 1")
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)


class Filtration:
    """Refining sequence of partitions of the atom indices.

    ``partitions[0]`` must be the single block of all atoms (trivial
    information at time 0) and ``partitions[n+1]`` must refine
    ``partitions[n]``. The final partition may or may not separate atoms;
    nothing assumes it does.
    """

    def __init__(self, atom_count: int, partitions: Sequence[Sequence[Sequence[int]]]):
        if atom_count < 1:
            raise ValidationError("atom_count must be >= 1")
        if len(partitions) < 1:
            raise ValidationError("need at least the trivial partition at time 0")
        self.atom_count = int(atom_count)

        cleaned: list[tuple[tuple[int, ...], ...]] = []
        indexers: list[np.ndarray] = []
        for n, part in enumerate(partitions):
            blocks = tuple(tuple(sorted(int(i) for i in block)) for block in part)
            if any(len(b) == 0 for b in blocks):
                raise ValidationError(f"partition {n} has an empty block")
            flat = [i for b in blocks for i in b]
            if sorted(flat) != list(range(atom_count)):
                raise ValidationError(
                    f"partition {n} is not a partition of 0..{atom_count - 1}"
                )
            idx = np.empty(atom_count, dtype=np.int64)
            for b_id, block in enumerate(blocks):
                idx[list(block)] = b_id
            idx.setflags(write=False)
            cleaned.append(blocks)
            indexers.append(idx)

        if len(cleaned[0]) != 1:
            raise ValidationError("partition 0 must be the single block of all atoms")
        for n in range(1, len(cleaned)):
            coarse = indexers[n - 1]
            for block in cleaned[n]:
                if len(set(coarse[list(block)])) != 1:
                    raise ValidationError(
                        f"partition {n} does not refine partition {n - 1}"
                    )

        self.partitions: tuple[tuple[tuple[int, ...], ...], ...] = tuple(cleaned)
        self._block_index: tuple[np.ndarray, ...] = tuple(indexers)

    @property
    def n_steps(self) -> int:
        """Last time index N (partitions run over n = 0..N)."""
        return len(self.partitions) - 1

    def blocks(self, n: int) -> tuple[tuple[int, ...], ...]:
        return self.partitions[n]

    def block_count(self, n: int) -> int:
        return len(self.partitions[n])

    def block_index(self, n: int) -> np.ndarray:
        """Array mapping atom index -> block position within partition n."""
        return self._block_index[n]

    def check_time(self, n: int) -> int:
        if not 0 <= n <= self.n_steps:
            raise ValidationError(f"time index {n} outside 0..{self.n_steps}")
        return int(n)


@dataclass(frozen=True)
class Measure:
    """Probability vector over atoms, optionally certified strictly positive.

    Weights must be nonnegative and sum to one within ``DEFAULT_TOL``. The
    ``strictly_positive`` flag marks equivalence to any strictly positive
    reference; degenerate measures (closure points of the constructions in
    :mod:`superhedge.measure_sets`) simply carry ``False``.
    """

    weights: np.ndarray
    strictly_positive: bool = None  # type: ignore[assignment]

    def __post_init__(self):
        w = _readonly(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("weights must be a nonempty 1-d vector")
        if np.any(w < 0.0):
            raise ValidationError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > DEFAULT_TOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1 within {DEFAULT_TOL}")
        positive = bool(np.all(w > POSITIVITY_FLOOR))
        object.__setattr__(self, "weights", w)
        if self.strictly_positive is None:
            object.__setattr__(self, "strictly_positive", positive)
        elif self.strictly_positive and not positive:
            raise ValidationError("measure declared strictly positive has a ~zero weight")

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def expectation(self, x: "RandomVariable | np.ndarray") -> float:
        values = x.values if isinstance(x, RandomVariable) else np.asarray(x, dtype=float)
        if values.shape != self.weights.shape:
            raise ValidationError("random variable length does not match atom count")
        return float(self.weights @ values)

    def density_wrt(self, other: "Measure") -> np.ndarray:
        """Pointwise density dself/dother; requires other strictly positive."""
        if other.size != self.size:
            raise ValidationError("measures live on different atom counts")
        if not other.strictly_positive:
            raise ValidationError("density needs a strictly positive base measure")
        return self.weights / other.weights


@dataclass(frozen=True)
class RandomVariable:
    """One scalar per atom."""

    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1 or v.size < 1:
            raise ValidationError("values must be a nonempty 1-d vector")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class AdaptedProcess:
    """Time-indexed process, one scalar per block of the partition at each time."""

    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(_readonly(v) for v in self.values))
        if len(self.values) < 1:
            raise ValidationError("adapted process needs at least time 0")

    @property
    def horizon(self) -> int:
        return len(self.values) - 1

    def check_against(self, filtration: Filtration) -> None:
        if self.horizon != filtration.n_steps:
            raise ValidationError(
                f"process horizon {self.horizon} != filtration horizon {filtration.n_steps}"
            )
        for n, vals in enumerate(self.values):
            if vals.size != filtration.block_count(n):
                raise ValidationError(
                    f"time {n}: {vals.size} values for {filtration.block_count(n)} blocks"
                )

    def at_atoms(self, filtration: Filtration, n: int) -> np.ndarray:
        """Broadcast the time-n block values to one scalar per atom."""
        return self.values[n][filtration.block_index(n)]

    @classmethod
    def from_atom_values(
        cls,
        filtration: Filtration,
        per_time_atom_values: Sequence[np.ndarray],
        tol: float = DEFAULT_TOL,
    ) -> "AdaptedProcess":
        """Collapse atom-level arrays that are constant on each block."""
        out = []
        for n, atom_vals in enumerate(per_time_atom_values):
            atom_vals = np.asarray(atom_vals, dtype=float)
            blocks = filtration.blocks(n)
            vals = np.empty(len(blocks))
            for b_id, block in enumerate(blocks):
                chunk = atom_vals[list(block)]
                if np.max(chunk) - np.min(chunk) > max(tol, tol * np.max(np.abs(chunk))):
                    raise ValidationError(
                        f"values at time {n} are not measurable: block {b_id} not constant"
                    )
                vals[b_id] = chunk[0]
            out.append(vals)
        return cls(tuple(out))


def conditional_expectation(
    m: Measure,
    x: RandomVariable,
    filtration: Filtration,
    n: int,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Blockwise average of x under m given the time-n partition.

    Returns one scalar per block of partition n. A block of zero mass is an
    error: it cannot happen for a strictly positive measure and signals a
    corrupted input otherwise.
    """
    filtration.check_time(n)
    _check_sizes(m, x, filtration)
    idx = filtration.block_index(n)
    mass = np.bincount(idx, weights=m.weights, minlength=filtration.block_count(n))
    if np.any(mass <= 0.0):
        raise ValidationError(f"zero conditional mass in partition {n}")
    num = np.bincount(idx, weights=m.weights * x.values, minlength=mass.size)
    return num / mass


def masked_conditional_expectation(
    m: Measure, x: RandomVariable, filtration: Filtration, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`conditional_expectation` but skips zero-mass blocks.

    Returns ``(values, covered)`` where ``covered`` is a boolean mask over
    blocks and ``values`` is NaN wherever not covered. Needed to evaluate
    conditional expectations under degenerate extreme measures.
    """
    filtration.check_time(n)
    _check_sizes(m, x, filtration)
    idx = filtration.block_index(n)
    mass = np.bincount(idx, weights=m.weights, minlength=filtration.block_count(n))
    num = np.bincount(idx, weights=m.weights * x.values, minlength=mass.size)
    covered = mass > 0.0
    values = np.full(mass.size, np.nan)
    values[covered] = num[covered] / mass[covered]
    return values, covered


def change_of_measure_cond_exp(
    p1: Measure,
    p2: Measure,
    x: RandomVariable,
    filtration: Filtration,
    n: int,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Conditional expectation under p1 computed through p2.

    Uses the density route: reweight by dP1/dP2 and normalise by the p2
    conditional expectation of the density. Must agree with the direct
    blockwise computation under p1 to within ``tol``; callers relying on the
    identity can assert that themselves, this function just evaluates the
    density formula.
    """
    if not (p1.strictly_positive and p2.strictly_positive):
        raise ValidationError("change of measure requires strictly positive measures")
    filtration.check_time(n)
    _check_sizes(p1, x, filtration)
    _check_sizes(p2, x, filtration)
    ratio = p1.weights / p2.weights
    idx = filtration.block_index(n)
    denom = np.bincount(idx, weights=p2.weights * ratio, minlength=filtration.block_count(n))
    if np.any(denom <= 0.0):
        raise ValidationError("zero conditional mass under the auxiliary measure")
    num = np.bincount(idx, weights=p2.weights * ratio * x.values, minlength=denom.size)
    return num / denom


def tv_metric(q1: Measure, q2: Measure) -> float:
    """Total-variation style distance: sum of absolute atom weight differences."""
    if q1.size != q2.size:
        raise ValidationError("measures live on different atom counts")
    return float(np.abs(q1.weights - q2.weights).sum())


def _check_sizes(m: Measure, x: RandomVariable, filtration: Filtration) -> None:
    if m.size != filtration.atom_count or x.size != filtration.atom_count:
        raise ValidationError("measure/random variable size does not match the space")
