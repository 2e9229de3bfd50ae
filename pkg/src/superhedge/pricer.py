"""Super-hedge fair price via the extreme-point supremum.

The price of a terminal payoff is the supremum, over one (down, up) increment
pair per step, of the payoff's expectation under the product of the per-step
two-point martingale measures. The optimiser enumerates per-step pair
assignments exhaustively when the joint space is small and otherwise runs
deterministic coordinate ascent from several starts, followed by coordinate
refinement rounds that shrink the grids around the incumbent. An independent
backward-induction oracle evaluates the same supremum through a recombining
price lattice.

Reported prices are grid lower bounds: the supremum over the unbounded
half-lines is approached from below as the grid widens (for a call it tends
to the spot only in the limit).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvariantViolation, ValidationError
from .finite_space import (
    AdaptedProcess,
    Filtration,
    Measure,
    RandomVariable,
    conditional_expectation,
)
from .engine import (
    Decomposition,
    HedgeCertificate,
    local_regularity_certificate,
    optional_decomposition,
)
from .gbm import GbmParams, PayoffSpec, centering_offset, evaluate_payoff, gross_return
from .measure_sets import MeasureSet, ProductRegularSpec, build_product_market, build_product_regular_set

#: Hard cap on N for the 2**N joint path enumeration.
JOINT_ENUM_CAP = 16

#: Default cap on exhaustively enumerated per-step pair assignments.
EXHAUSTIVE_CAP = 300_000

_CHUNK = 16_384


@dataclass(frozen=True)
class GridSpec:
    """Per-coordinate search grids for the 2N optimisation variables.

    ``y_down`` candidates must satisfy y <= -d - delta and ``y_up`` candidates
    y >= -d + delta; the no-move candidate (both increments at -d, a point
    mass at gross return 1) is appended separately when ``include_no_move``.
    """

    y_down: np.ndarray
    y_up: np.ndarray
    refine_rounds: int = 3
    denom_floor: float = 1e-9
    include_no_move: bool = True
    bound: float | None = None

    def __post_init__(self):
        down = np.sort(np.asarray(self.y_down, dtype=float))
        up = np.sort(np.asarray(self.y_up, dtype=float))
        if down.size == 0 or up.size == 0:
            raise ValidationError("empty grid")
        down.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "y_down", down)
        object.__setattr__(self, "y_up", up)

    @classmethod
    def from_bound(
        cls,
        params: GbmParams,
        bound: float | None = None,
        points_per_side: int = 64,
        delta: float = 1e-6,
        refine_rounds: int = 3,
        denom_floor: float = 1e-9,
        include_no_move: bool = True,
    ) -> "GridSpec":
        """Symmetric default grid: increments covering +-bound around -d.

        ``bound`` defaults to 10*sqrt(dt), ten standard deviations of the
        Gaussian step law.
        """
        if bound is None:
            bound = 10.0 * np.sqrt(params.dt)
        if bound <= delta:
            raise ValidationError("bound must exceed delta")
        d = centering_offset(params)
        return cls(
            y_down=np.linspace(-bound - d, -d - delta, points_per_side),
            y_up=np.linspace(-d + delta, bound - d, points_per_side),
            refine_rounds=refine_rounds,
            denom_floor=denom_floor,
            include_no_move=include_no_move,
            bound=float(bound),
        )


@dataclass(frozen=True)
class PricingCandidate:
    """One (down, up) increment pair per step; a no-move step has both at -d."""

    y_down: np.ndarray
    y_up: np.ndarray

    def __post_init__(self):
        down = np.asarray(self.y_down, dtype=float)
        up = np.asarray(self.y_up, dtype=float)
        if down.shape != up.shape or down.ndim != 1:
            raise ValidationError("y_down and y_up must be equal-length vectors")
        down.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "y_down", down)
        object.__setattr__(self, "y_up", up)

    @property
    def n_steps(self) -> int:
        return int(self.y_down.size)

    def no_move_steps(self, params: GbmParams) -> np.ndarray:
        d = centering_offset(params)
        return (self.y_down == -d) & (self.y_up == -d)


@dataclass(frozen=True)
class PricingResult:
    price: float
    argmax: PricingCandidate
    evaluations: int
    grid_spec: GridSpec
    oracle_price: float | None = None


def step_weights(
    params: GbmParams, y1: float, y2: float, denom_floor: float = 1e-9
) -> tuple[float, float]:
    """Two-point martingale weights for gross returns l = G(y1), u = G(y2).

    Returns (w_down, w_up) = ((u-1)/(u-l), (1-l)/(u-l)); both lie in [0, 1],
    they sum to one, and w_down*l + w_up*u = 1. Requires y1 <= -d < y2 and a
    return separation of at least denom_floor.
    """
    d = centering_offset(params)
    if not (y1 <= -d < y2):
        raise ValidationError("need y1 <= -d < y2")
    l = gross_return(params, y1)
    u = gross_return(params, y2)
    sep = u - l
    if sep < denom_floor:
        raise ValidationError(f"return separation {sep} below floor {denom_floor}")
    return (u - 1.0) / sep, (1.0 - l) / sep


class _StepPairs:
    """Per-step pair table: log-returns and weights, sorted by (y1, y2).

    The no-move candidate, when included, sits last (its y1 = -d exceeds all
    regular y1 candidates), so first-hit argmax scans prefer regular pairs and
    assignment enumeration order is lexicographic in the candidate vectors.
    """

    def __init__(self, params: GbmParams, grid: GridSpec):
        d = centering_offset(params)
        if np.any(grid.y_down > -d) or np.any(grid.y_up <= -d):
            raise ValidationError("grid bounds must respect the y <= -d / y > -d split")
        pairs = [(float(y1), float(y2)) for y1 in grid.y_down for y2 in grid.y_up]
        pairs.sort()
        y1s = np.array([p[0] for p in pairs])
        y2s = np.array([p[1] for p in pairs])
        l = gross_return(params, y1s)
        u = gross_return(params, y2s)
        sep = u - l
        keep = sep >= grid.denom_floor
        if not np.any(keep):
            raise ValidationError("no pair satisfies the separation floor")
        y1s, y2s, l, u, sep = y1s[keep], y2s[keep], l[keep], u[keep], sep[keep]
        wd = (u - 1.0) / sep
        wu = (1.0 - l) / sep
        if grid.include_no_move:
            y1s = np.append(y1s, -d)
            y2s = np.append(y2s, -d)
            l = np.append(l, 1.0)
            u = np.append(u, 1.0)
            wd = np.append(wd, 1.0)
            wu = np.append(wu, 0.0)
        self.y1, self.y2 = y1s, y2s
        self.log_l, self.log_u = np.log(l), np.log(u)
        self.l, self.u = l, u
        self.wd, self.wu = wd, wu
        self.count = y1s.size

    def corner_index(self) -> int:
        scores = list(zip(self.y1, -self.y2))
        return int(min(range(self.count), key=lambda i: scores[i]))

    def no_move_index(self) -> int | None:
        return self.count - 1 if self.wu[-1] == 0.0 else None

    def index_of(self, y1: float, y2: float) -> int | None:
        hits = np.flatnonzero((self.y1 == y1) & (self.y2 == y2))
        return int(hits[0]) if hits.size else None


class _Evaluator:
    """Vectorised objective over batches of per-step pair assignments."""

    def __init__(self, params: GbmParams, payoff: PayoffSpec, tables: list[_StepPairs], threads: int = 1):
        self.params = params
        self.payoff = payoff
        self.tables = tables
        self.n = len(tables)
        if self.n > JOINT_ENUM_CAP:
            raise ValidationError(f"n_steps {self.n} exceeds joint enumeration cap {JOINT_ENUM_CAP}")
        self.threads = max(1, int(threads))
        paths = np.arange(2**self.n)
        self.bits = np.array(
            [(paths >> (self.n - 1 - s)) & 1 for s in range(self.n)], dtype=bool
        )
        self.evaluations = 0

    def values(self, ids: np.ndarray) -> np.ndarray:
        """Objective for each assignment row of ``ids`` (shape (A, n_steps))."""
        ids = np.atleast_2d(ids)
        self.evaluations += ids.shape[0]
        if ids.shape[0] <= _CHUNK or self.threads == 1:
            return self._values_serial(ids)
        chunks = [ids[i : i + _CHUNK] for i in range(0, ids.shape[0], _CHUNK)]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            parts = list(pool.map(self._values_serial, chunks))
        return np.concatenate(parts)

    def _values_serial(self, ids: np.ndarray) -> np.ndarray:
        out = np.empty(ids.shape[0])
        for lo in range(0, ids.shape[0], _CHUNK):
            chunk = ids[lo : lo + _CHUNK]
            log_s = np.zeros((chunk.shape[0], 2**self.n))
            weight = np.ones((chunk.shape[0], 2**self.n))
            for s, table in enumerate(self.tables):
                sel = chunk[:, s]
                down, up = table.log_l[sel], table.log_u[sel]
                log_s += np.where(self.bits[s][None, :], up[:, None], down[:, None])
                weight *= np.where(
                    self.bits[s][None, :], table.wu[sel][:, None], table.wd[sel][:, None]
                )
            prices = self.params.s0 * np.exp(log_s)
            pay = evaluate_payoff(self.payoff, prices)
            out[lo : lo + chunk.shape[0]] = (weight * pay).sum(axis=1)
        return out

    def candidate(self, ids) -> PricingCandidate:
        return PricingCandidate(
            y_down=np.array([self.tables[s].y1[i] for s, i in enumerate(ids)]),
            y_up=np.array([self.tables[s].y2[i] for s, i in enumerate(ids)]),
        )


def objective(
    params: GbmParams,
    payoff: PayoffSpec,
    candidate: PricingCandidate,
    denom_floor: float = 1e-9,
) -> float:
    """Expectation of the payoff under the candidate's product two-point measure.

    Sums the 2**N down/up scenario combinations, weighting each by the product
    of per-step martingale weights. No-move steps contribute a unit return
    with full weight.
    """
    if candidate.n_steps != params.n_steps:
        raise ValidationError("candidate has the wrong number of steps")
    if params.n_steps > JOINT_ENUM_CAP:
        raise ValidationError(f"n_steps exceeds joint enumeration cap {JOINT_ENUM_CAP}")
    d = centering_offset(params)
    no_move = candidate.no_move_steps(params)
    log_l = np.zeros(params.n_steps)
    log_u = np.zeros(params.n_steps)
    wd = np.ones(params.n_steps)
    wu = np.zeros(params.n_steps)
    for s in range(params.n_steps):
        if no_move[s]:
            continue
        w = step_weights(params, candidate.y_down[s], candidate.y_up[s], denom_floor)
        wd[s], wu[s] = w
        log_l[s] = np.log(gross_return(params, candidate.y_down[s]))
        log_u[s] = np.log(gross_return(params, candidate.y_up[s]))
    paths = np.arange(2**params.n_steps)
    total = 0.0
    log_s = np.zeros(paths.size)
    weight = np.ones(paths.size)
    for s in range(params.n_steps):
        bit = ((paths >> (params.n_steps - 1 - s)) & 1).astype(bool)
        log_s += np.where(bit, log_u[s], log_l[s])
        weight *= np.where(bit, wu[s], wd[s])
    total = float((weight * evaluate_payoff(payoff, params.s0 * np.exp(log_s))).sum())
    return total


def _ascend(ev: _Evaluator, start: np.ndarray, max_sweeps: int = 32) -> tuple[float, np.ndarray]:
    ids = start.copy()
    best = float(ev.values(ids[None, :])[0])
    for _ in range(max_sweeps):
        changed = False
        for s in range(ev.n):
            table = ev.tables[s]
            trial = np.tile(ids, (table.count, 1))
            trial[:, s] = np.arange(table.count)
            vals = ev.values(trial)
            top = int(np.argmax(vals))
            if vals[top] > best and not np.isclose(vals[top], best, rtol=0.0, atol=0.0):
                best = float(vals[top])
                ids = trial[top]
                changed = True
        if not changed:
            break
    return best, ids


def _search(ev: _Evaluator, exhaustive_cap: int, seeds: list[np.ndarray]) -> tuple[float, np.ndarray]:
    counts = [t.count for t in ev.tables]
    total = int(np.prod([float(c) for c in counts]))
    if total <= exhaustive_cap:
        # Full joint enumeration in lexicographic assignment order.
        best_val, best_ids = -np.inf, None
        strides = np.cumprod([1] + counts[::-1][:-1])[::-1]
        for lo in range(0, total, _CHUNK):
            flat = np.arange(lo, min(lo + _CHUNK, total))
            ids = (flat[:, None] // strides[None, :]) % np.array(counts)[None, :]
            vals = ev.values(ids)
            top = int(np.argmax(vals))
            if vals[top] > best_val:
                best_val, best_ids = float(vals[top]), ids[top]
        return best_val, best_ids

    best_val, best_ids = -np.inf, None
    for seed in seeds:
        val, ids = _ascend(ev, seed)
        if val > best_val:
            best_val, best_ids = val, ids
    return best_val, best_ids


def price_sup(
    params: GbmParams,
    payoff: PayoffSpec,
    grid: GridSpec | None = None,
    refine_rounds: int | None = None,
    exhaustive_cap: int = EXHAUSTIVE_CAP,
    threads: int = 1,
) -> PricingResult:
    """Maximise the scenario objective over per-step increment pairs.

    Joint assignments are enumerated exhaustively whenever their number is at
    most ``exhaustive_cap`` (always the case for one step on a default grid);
    otherwise deterministic coordinate ascent runs from the grid corner, the
    best uniform assignment and the no-move assignment. Each refinement round
    then shrinks every coordinate's grid by a factor 4 around the incumbent
    (keeping the incumbent itself in the candidate set) and re-searches.
    """
    if grid is None:
        grid = GridSpec.from_bound(params)
    rounds = grid.refine_rounds if refine_rounds is None else int(refine_rounds)

    tables = [_StepPairs(params, grid)] * params.n_steps
    ev = _Evaluator(params, payoff, tables, threads=threads)

    t0 = tables[0]
    seeds = [np.full(params.n_steps, t0.corner_index())]
    uniform_vals = ev.values(
        np.tile(np.arange(t0.count)[:, None], (1, params.n_steps))
    )
    seeds.append(np.full(params.n_steps, int(np.argmax(uniform_vals))))
    if t0.no_move_index() is not None:
        seeds.append(np.full(params.n_steps, t0.no_move_index()))

    best_val, best_ids = _search(ev, exhaustive_cap, seeds)
    incumbent = ev.candidate(best_ids)
    evaluations = ev.evaluations

    down_width = float(grid.y_down[-1] - grid.y_down[0])
    up_width = float(grid.y_up[-1] - grid.y_up[0])
    d = centering_offset(params)
    for r in range(1, rounds + 1):
        shrink = 4.0**r
        step_tables = []
        for s in range(params.n_steps):
            if incumbent.y_down[s] == -d and incumbent.y_up[s] == -d:
                step_tables.append(tables[s])
                continue
            half_d = 0.5 * down_width / shrink
            half_u = 0.5 * up_width / shrink
            lo_d = max(float(grid.y_down[0]), incumbent.y_down[s] - half_d)
            hi_d = min(float(grid.y_down[-1]), incumbent.y_down[s] + half_d)
            lo_u = max(float(grid.y_up[0]), incumbent.y_up[s] - half_u)
            hi_u = min(float(grid.y_up[-1]), incumbent.y_up[s] + half_u)
            sub = replace(
                grid,
                y_down=np.union1d(
                    np.linspace(lo_d, hi_d, grid.y_down.size), [incumbent.y_down[s]]
                ),
                y_up=np.union1d(
                    np.linspace(lo_u, hi_u, grid.y_up.size), [incumbent.y_up[s]]
                ),
            )
            step_tables.append(_StepPairs(params, sub))
        ev = _Evaluator(params, payoff, step_tables, threads=threads)
        seeds = []
        held = np.array(
            [
                step_tables[s].index_of(incumbent.y_down[s], incumbent.y_up[s])
                for s in range(params.n_steps)
            ]
        )
        if not np.any(held == None):  # noqa: E711  (index_of returns None when absent)
            seeds.append(held.astype(np.int64))
        seeds.append(np.array([t.corner_index() for t in step_tables]))
        val, ids = _search(ev, exhaustive_cap, seeds)
        evaluations += ev.evaluations
        if val > best_val:
            best_val = val
            incumbent = ev.candidate(ids)

    price = objective(params, payoff, incumbent, denom_floor=grid.denom_floor)
    if abs(price - best_val) > 1e-12 * max(1.0, abs(price)):
        raise InvariantViolation("argmax objective mismatch against search value")
    return PricingResult(
        price=price,
        argmax=incumbent,
        evaluations=evaluations,
        grid_spec=grid,
    )


def backward_induction_oracle(
    params: GbmParams,
    payoff: PayoffSpec,
    grid: GridSpec | None = None,
    lattice_nodes: int | None = None,
    assignment_cap: int = 2_000_000,
    round_decimals: int = 11,
) -> float:
    """Independent route to the same supremum, via a recombining price lattice.

    Enumerates every per-step pair assignment drawn from the grid (including
    the no-move candidate) and evaluates each expectation by backward
    induction over the assignment's reachable prices: exact dedup of
    log-price levels by default, or monotone piecewise-linear interpolation
    on a fixed geometric lattice of ``lattice_nodes`` points. Intended as a
    test oracle on modest grids; the assignment count is capped.
    """
    if grid is None:
        grid = GridSpec.from_bound(params)
    table = _StepPairs(params, grid)
    n = params.n_steps
    total = table.count**n
    if total > assignment_cap:
        raise ValidationError(
            f"{total} assignments exceed the oracle cap {assignment_cap}; use a smaller grid"
        )

    log_s0 = np.log(params.s0)
    nodes = None
    if lattice_nodes is not None:
        span = n * max(float(np.max(np.abs(table.log_l))), float(np.max(np.abs(table.log_u))))
        nodes = np.linspace(log_s0 - span - 1e-9, log_s0 + span + 1e-9, int(lattice_nodes))
        node_pay = evaluate_payoff(payoff, np.exp(nodes))

    best = -np.inf
    counts = np.full(n, table.count)
    strides = np.cumprod(np.concatenate(([1.0], counts[::-1][:-1].astype(float))))[::-1]
    for flat in range(total):
        ids = ((flat // strides) % counts).astype(np.int64)
        if nodes is None:
            # Dedup levels on rounded keys but evaluate the payoff at an
            # unrounded representative, so rounding never shifts prices.
            keys = [np.array([round(log_s0, round_decimals)])]
            reps = [np.array([log_s0])]
            for s in range(n):
                nxt = np.concatenate(
                    (reps[-1] + table.log_l[ids[s]], reps[-1] + table.log_u[ids[s]])
                )
                k, first = np.unique(np.round(nxt, round_decimals), return_index=True)
                keys.append(k)
                reps.append(nxt[first])
            v = np.atleast_1d(evaluate_payoff(payoff, np.exp(reps[n])))
            for s in range(n - 1, -1, -1):
                down = np.searchsorted(
                    keys[s + 1], np.round(reps[s] + table.log_l[ids[s]], round_decimals)
                )
                up = np.searchsorted(
                    keys[s + 1], np.round(reps[s] + table.log_u[ids[s]], round_decimals)
                )
                v = table.wd[ids[s]] * v[down] + table.wu[ids[s]] * v[up]
            value = float(v[0])
        else:
            v = node_pay.copy()
            for s in range(n - 1, -1, -1):
                lo_needed = nodes[0] + min(table.log_l[ids[s]], 0.0)
                if lo_needed < nodes[0] - (nodes[-1] - nodes[0]):
                    raise ValidationError(
                        f"lattice range exceeded near price {np.exp(lo_needed)}"
                    )
                v = table.wd[ids[s]] * np.interp(nodes + table.log_l[ids[s]], nodes, v) + \
                    table.wu[ids[s]] * np.interp(nodes + table.log_u[ids[s]], nodes, v)
            value = float(np.interp(log_s0, nodes, v))
        if value > best:
            best = value
    return best


@dataclass(frozen=True)
class CandidateHedge:
    """Hedge data for the argmax candidate's scenario market."""

    filtration: Filtration
    value: AdaptedProcess
    decomposition: Decomposition
    certificate: HedgeCertificate
    terminal_prices: np.ndarray
    price: float

    @property
    def coefficients(self) -> tuple[np.ndarray, ...]:
        return self.certificate.coefficients


def hedge_from_price(
    params: GbmParams, payoff: PayoffSpec, result: PricingResult
) -> CandidateHedge:
    """Optional decomposition of the value process on the argmax market.

    Builds the finite two-atoms-per-step market of the candidate (no-move
    steps carry no risk and are dropped), prices the payoff by conditional
    expectation under the candidate measure, and certifies the decomposition;
    the per-step coefficients are the hedge ratios. The value process starts
    at the price and matches the payoff at the horizon atomwise.
    """
    cand = result.argmax
    no_move = cand.no_move_steps(params)
    live = np.flatnonzero(~no_move)
    if live.size == 0:
        flat = float(evaluate_payoff(payoff, params.s0))
        filtration = Filtration(1, [[(0,)]])
        value = AdaptedProcess((np.array([flat]),))
        zero = AdaptedProcess((np.array([0.0]),))
        cert = HedgeCertificate(ratio_bounds=(), coefficients=(), shift=0.0)
        return CandidateHedge(
            filtration=filtration,
            value=value,
            decomposition=Decomposition(martingale_part=value, compensator=zero),
            certificate=cert,
            terminal_prices=np.array([params.s0]),
            price=flat,
        )

    excess, probs = [], []
    for s in live:
        l = gross_return(params, float(cand.y_down[s]))
        u = gross_return(params, float(cand.y_up[s]))
        wd, wu = step_weights(params, float(cand.y_down[s]), float(cand.y_up[s]))
        excess.append([l - 1.0, u - 1.0])
        probs.append([wd, wu])
    spec = ProductRegularSpec(excess=excess, step_probs=probs)
    market = build_product_market(spec)
    mset = build_product_regular_set(market)
    filtration = market.filtration

    prices = params.s0 * market.target.values
    pay = RandomVariable(evaluate_payoff(payoff, prices))
    value = AdaptedProcess(
        tuple(
            conditional_expectation(market.reference, pay, filtration, t)
            for t in range(filtration.n_steps + 1)
        )
    )
    if abs(value.values[0][0] - result.price) > 1e-10 * max(1.0, abs(result.price)):
        raise InvariantViolation(
            f"candidate market value {value.values[0][0]} disagrees with price {result.price}"
        )
    cert = local_regularity_certificate(value, mset, filtration)
    dec = optional_decomposition(value, mset, filtration)
    return CandidateHedge(
        filtration=filtration,
        value=value,
        decomposition=dec,
        certificate=cert,
        terminal_prices=prices,
        price=float(value.values[0][0]),
    )


def bound_sweep(
    params: GbmParams,
    payoff: PayoffSpec,
    bounds,
    points_per_side: int = 64,
    refine_rounds: int = 0,
    threads: int = 1,
) -> list[tuple[float, float]]:
    """Price as a function of the grid bound; shows convergence from below."""
    out = []
    for b in bounds:
        grid = GridSpec.from_bound(
            params, bound=float(b), points_per_side=points_per_side,
            refine_rounds=refine_rounds,
        )
        res = price_sup(params, payoff, grid, threads=threads)
        out.append((float(b), res.price))
    return out
