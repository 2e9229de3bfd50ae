import numpy as np
import pytest

from superhedge import (
    AdaptedProcess,
    Filtration,
    Measure,
    ProductRegularSpec,
    RandomVariable,
    build_product_market,
)


def random_measure(rng, n, floor=1e-3):
    w = rng.uniform(floor, 1.0, size=n)
    return Measure(w / w.sum())


def random_refining_filtration(rng, n_atoms, n_times):
    """Random refining partition sequence starting from the trivial partition."""
    parts = [[tuple(range(n_atoms))]]
    for _ in range(n_times):
        nxt = []
        for block in parts[-1]:
            if len(block) >= 2 and rng.random() < 0.7:
                cut = rng.integers(1, len(block))
                perm = rng.permutation(list(block))
                nxt.append(tuple(sorted(perm[:cut])))
                nxt.append(tuple(sorted(perm[cut:])))
            else:
                nxt.append(block)
        parts.append(nxt)
    return Filtration(n_atoms, parts)


def random_both_signed(rng, n):
    """Random variable guaranteed to take a strict negative and a strict positive."""
    v = rng.normal(size=n)
    v[0] = -abs(v[0]) - 0.1
    v[1] = abs(v[1]) + 0.1
    return RandomVariable(v)


def random_product_market(rng, n_steps=None, max_factor=4, max_atoms=64):
    """Random N-step product market with both-signed per-step excess values."""
    if n_steps is None:
        n_steps = int(rng.integers(1, 5))
    if 2**n_steps > max_atoms:
        raise ValueError("atom budget too small for the step count")
    sizes = []
    atoms = 1
    for step in range(n_steps):
        remaining = n_steps - step - 1
        cap = max(2, max_atoms // (atoms * 2**remaining))
        s = int(rng.integers(2, min(max_factor, cap) + 1))
        sizes.append(s)
        atoms *= s
    excess, probs, exposures = [], [], []
    prefix = 1
    for s in sizes:
        e = rng.uniform(-0.9, 0.9, size=s)
        e[0] = -rng.uniform(0.1, 0.9)
        e[-1] = rng.uniform(0.1, 0.9)
        excess.append(e)
        w = rng.uniform(0.2, 1.0, size=s)
        probs.append(w / w.sum())
        exposures.append(rng.uniform(0.3, 1.0, size=prefix))
        prefix *= s
    return build_product_market(ProductRegularSpec(excess, exposures, probs))


def random_nonneg_supermartingale(rng, market):
    """Nonnegative super-martingale w.r.t. every measure family with market.martingale.

    Built as scale * martingale + (cap - accumulated adapted nonnegative
    drains), optionally multiplied into the martingale (both forms are
    super-martingales under every member because the drains only remove value).
    """
    filt = market.filtration
    n = filt.n_steps
    kind = rng.integers(0, 4)
    drain_atoms = np.zeros(filt.atom_count)
    drains = [np.zeros(filt.atom_count)]
    for t in range(1, n + 1):
        inc = rng.uniform(0.0, 0.4, size=filt.block_count(t))[filt.block_index(t)]
        drain_atoms = drain_atoms + inc
        drains.append(drain_atoms.copy())
    cap = float(np.max(drains[-1])) + rng.uniform(0.1, 1.0)
    m_atoms = [market.martingale.at_atoms(filt, t) for t in range(n + 1)]
    if kind == 0:  # martingale plus drained cash bucket
        scale = rng.uniform(0.2, 2.0)
        vals = [scale * m_atoms[t] + (cap - drains[t]) for t in range(n + 1)]
    elif kind == 1:  # nonincreasing positive process times the martingale
        vals = [(cap - drains[t]) * m_atoms[t] for t in range(n + 1)]
    elif kind == 2:  # pure scaled martingale
        scale = rng.uniform(0.2, 2.0)
        vals = [scale * m_atoms[t] for t in range(n + 1)]
    else:  # deterministic constant
        vals = [np.full(filt.atom_count, cap) for _ in range(n + 1)]
    return AdaptedProcess.from_atom_values(filt, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
