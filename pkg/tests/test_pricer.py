import numpy as np
import pytest

from superhedge import (
    GbmParams,
    GridSpec,
    PayoffSpec,
    PricingCandidate,
    ValidationError,
    backward_induction_oracle,
    bound_sweep,
    centering_offset,
    evaluate_payoff,
    gross_return,
    hedge_from_price,
    objective,
    price_sup,
    step_weights,
)


def gbm(n_steps=1, sigma=0.25, r=0.0, s0=1.0, dt=1.0, mu=None):
    return GbmParams(s0=s0, r=r, sigma=sigma, dt=dt, n_steps=n_steps, mu=mu)


def corner_grid(params, l=0.5, u=2.0, points=16, refine_rounds=0):
    """Grid whose widest pair hits the gross returns (l, u) exactly."""
    from superhedge import increment_for_return

    y_lo = increment_for_return(params, l)
    y_hi = increment_for_return(params, u)
    d = centering_offset(params)
    return GridSpec(
        y_down=np.linspace(y_lo, -d - 1e-6, points),
        y_up=np.linspace(-d + 1e-6, y_hi, points),
        refine_rounds=refine_rounds,
    )


class TestStepWeights:
    def test_binomial_oracle(self):
        p = gbm()
        w = step_weights(p, np.log(0.5) / 0.25, np.log(2.0) / 0.25)
        assert w == pytest.approx((2.0 / 3.0, 1.0 / 3.0), abs=1e-15)
        assert w[0] * 0.5 + w[1] * 2.0 == pytest.approx(1.0, abs=1e-15)

    def test_randomised_weight_identities(self, rng):
        p = gbm()
        for _ in range(300):
            l = rng.uniform(0.05, 0.999)
            u = rng.uniform(1.001, 20.0)
            y1 = np.log(l) / p.sigma
            y2 = np.log(u) / p.sigma
            wd, wu = step_weights(p, y1, y2)
            assert 0.0 <= wd <= 1.0 and 0.0 <= wu <= 1.0
            assert wd + wu == pytest.approx(1.0, abs=1e-12)
            l2, u2 = gross_return(p, y1), gross_return(p, y2)
            assert wd * l2 + wu * u2 == pytest.approx(1.0, abs=1e-12)

    def test_up_return_near_one_puts_weight_up(self):
        p = gbm()
        wd, wu = step_weights(p, np.log(0.5) / 0.25, np.log(1.0 + 1e-7) / 0.25)
        assert wu > 0.999999
        assert wd < 1e-6

    def test_symmetric_additive_pair(self):
        p = gbm()
        y1 = np.log(0.8) / 0.25
        y2 = np.log(1.2) / 0.25
        assert step_weights(p, y1, y2) == pytest.approx((0.5, 0.5), abs=1e-14)

    def test_split_and_floor_enforced(self):
        p = gbm()
        with pytest.raises(ValidationError):
            step_weights(p, 0.1, 1.0)  # y1 > -d = 0
        with pytest.raises(ValidationError):
            step_weights(p, -1e-12, 1e-12, denom_floor=1e-9)


class TestObjective:
    def test_constant_payoff(self, rng):
        p = gbm(n_steps=3)
        flat = PayoffSpec.table([0.5, 2.0], [1.7, 1.7])
        for _ in range(20):
            c = PricingCandidate(
                y_down=-np.abs(rng.normal(size=3)) - 1e-6,
                y_up=np.abs(rng.normal(size=3)) + 1e-6,
            )
            assert objective(p, flat, c) == pytest.approx(1.7, abs=1e-12)

    def test_one_step_binomial_call(self):
        p = gbm()
        c = PricingCandidate(np.array([np.log(0.5) / 0.25]), np.array([np.log(2.0) / 0.25]))
        assert objective(p, PayoffSpec.call(1.0), c) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_two_step_hand_enumeration(self):
        # identical steps (l, u) = (1/2, 2): weights (4/9, 2/9, 2/9, 1/9) on
        # terminal prices (1/4, 1, 1, 4); call K=1 pays only 3 at the top.
        p = gbm(n_steps=2)
        y1, y2 = np.log(0.5) / 0.25, np.log(2.0) / 0.25
        c = PricingCandidate(np.array([y1, y1]), np.array([y2, y2]))
        assert objective(p, PayoffSpec.call(1.0), c) == pytest.approx(1.0 / 3.0, abs=1e-14)

    def test_no_move_step(self):
        p = gbm(n_steps=2)
        d = centering_offset(p)
        c = PricingCandidate(
            np.array([np.log(0.5) / 0.25, -d]), np.array([np.log(2.0) / 0.25, -d])
        )
        assert objective(p, PayoffSpec.call(1.0), c) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_matches_displayed_weight_formula(self, rng):
        # Direct transcription with absolute values and the cyclic index
        # convention (the complementary increment supplies the numerator).
        p = gbm(n_steps=3)
        for _ in range(25):
            ys = np.sort(rng.uniform(0.1, 3.0, size=(3, 2)), axis=1)
            c = PricingCandidate(y_down=-ys[:, 1], y_up=ys[:, 0])
            total = 0.0
            for bits in range(8):
                term = 1.0
                log_price = 0.0
                for s in range(3):
                    pick = (bits >> (2 - s)) & 1  # 0 = down, 1 = up
                    y_pair = (float(c.y_down[s]), float(c.y_up[s]))
                    own = gross_return(p, y_pair[pick])
                    other = gross_return(p, y_pair[1 - pick])
                    term *= abs(other - 1.0) / abs(other - own)
                    log_price += np.log(own)
                total += term * evaluate_payoff(
                    PayoffSpec.call(1.0), p.s0 * np.exp(log_price)
                )
            assert objective(p, PayoffSpec.call(1.0), c) == pytest.approx(total, abs=1e-12)

    def test_candidate_shape_checked(self):
        p = gbm(n_steps=2)
        with pytest.raises(ValidationError):
            objective(p, PayoffSpec.call(1.0), PricingCandidate(np.array([-1.0]), np.array([1.0])))


class TestPriceSup:
    def test_constant_payoff_prices_flat(self):
        p = gbm(n_steps=2)
        flat = PayoffSpec.table([0.5, 2.0], [0.4, 0.4])
        res = price_sup(p, flat, corner_grid(p, points=6))
        assert res.price == pytest.approx(0.4, abs=1e-12)

    def test_one_step_call_bound(self):
        p = gbm()
        res = price_sup(p, PayoffSpec.call(1.0), corner_grid(p))
        assert res.price >= 1.0 / 3.0 - 1e-12
        assert res.price == pytest.approx(objective(p, PayoffSpec.call(1.0), res.argmax), abs=1e-12)

    def test_two_step_call_exact_third(self):
        p = gbm(n_steps=2)
        res = price_sup(p, PayoffSpec.call(1.0), corner_grid(p))
        assert res.price == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_degenerate_candidate_considered(self):
        # payoff peaked exactly at the spot: standing still is optimal.
        p = gbm()
        tent = PayoffSpec.table([0.95, 1.0, 1.05], [0.0, 1.0, 0.0])
        res = price_sup(p, tent, corner_grid(p, points=4))
        assert res.price == pytest.approx(1.0, abs=1e-12)
        d = centering_offset(p)
        assert res.argmax.y_down[0] == -d and res.argmax.y_up[0] == -d

    def test_grid_enlargement_monotone(self):
        p = gbm(sigma=0.2)
        tent = PayoffSpec.table([1.05, 1.15, 1.25], [0.0, 1.0, 0.0])
        prev = -1.0
        for pts in (4, 8, 16, 32):
            grid = GridSpec.from_bound(p, bound=6.0, points_per_side=pts, refine_rounds=0)
            price = price_sup(p, tent, grid).price
            assert price >= prev - 1e-15
            prev = price

    def test_refinement_recovers_off_grid_peak(self):
        p = gbm(sigma=0.2)
        tent = PayoffSpec.table([1.05, 1.15, 1.25], [0.0, 1.0, 0.0])
        coarse = price_sup(
            p, tent, GridSpec.from_bound(p, bound=10.0, points_per_side=5, refine_rounds=0)
        )
        refined = price_sup(
            p, tent, GridSpec.from_bound(p, bound=10.0, points_per_side=5, refine_rounds=3)
        )
        assert refined.price > coarse.price
        assert gross_return(p, float(refined.argmax.y_up[0])) == pytest.approx(1.15, abs=0.01)

    def test_dominates_grid_candidates(self, rng):
        p = gbm(n_steps=2, sigma=0.2)
        grid = GridSpec.from_bound(p, bound=4.0, points_per_side=8, refine_rounds=0)
        pay = PayoffSpec.digital(1.07)
        res = price_sup(p, pay, grid)
        for _ in range(100):
            c = PricingCandidate(
                y_down=rng.choice(grid.y_down, size=2),
                y_up=rng.choice(grid.y_up, size=2),
            )
            assert objective(p, pay, c) <= res.price + 1e-12

    def test_deterministic_and_thread_invariant(self):
        p = gbm(n_steps=2, sigma=0.2)
        grid = GridSpec.from_bound(p, bound=4.0, points_per_side=8, refine_rounds=1)
        a = price_sup(p, PayoffSpec.call(1.0), grid)
        b = price_sup(p, PayoffSpec.call(1.0), grid)
        c = price_sup(p, PayoffSpec.call(1.0), grid, threads=3)
        assert a.price == b.price == c.price
        assert np.array_equal(a.argmax.y_down, c.argmax.y_down)
        assert np.array_equal(a.argmax.y_up, c.argmax.y_up)

    def test_drift_mode_prices(self):
        p = gbm(n_steps=1, mu=0.08, r=0.02, sigma=0.25)
        res = price_sup(p, PayoffSpec.call(1.0), GridSpec.from_bound(p, bound=5.0, points_per_side=16))
        assert 0.0 < res.price < 1.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValidationError):
            GridSpec(y_down=np.array([]), y_up=np.array([1.0]))


class TestOracle:
    def test_one_step_matches_grid_maximum(self):
        p = gbm(sigma=0.2)
        grid = GridSpec.from_bound(p, bound=4.0, points_per_side=6, refine_rounds=0)
        pay = PayoffSpec.call(1.0)
        best = -1.0
        d = centering_offset(p)
        for y1 in grid.y_down:
            for y2 in grid.y_up:
                best = max(best, objective(p, pay, PricingCandidate(np.array([y1]), np.array([y2]))))
        best = max(best, evaluate_payoff(pay, p.s0))  # no-move candidate
        assert backward_induction_oracle(p, pay, grid) == pytest.approx(best, abs=1e-12)

    def test_two_step_hand_value(self):
        p = gbm(n_steps=2)
        assert backward_induction_oracle(p, PayoffSpec.call(1.0), corner_grid(p, points=4)) == \
            pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_constant_payoff(self):
        p = gbm(n_steps=3)
        flat = PayoffSpec.table([0.5, 2.0], [2.2, 2.2])
        got = backward_induction_oracle(p, flat, corner_grid(p, points=3))
        assert got == pytest.approx(2.2, abs=1e-12)

    def test_agreement_with_price_sup(self):
        p = gbm(n_steps=3, sigma=0.2)
        grid = GridSpec.from_bound(p, bound=3.0, points_per_side=4, delta=1e-4, refine_rounds=0)
        for pay in (PayoffSpec.call(1.0), PayoffSpec.put(1.0), PayoffSpec.digital(1.07)):
            sup = price_sup(p, pay, grid, exhaustive_cap=500_000).price
            orc = backward_induction_oracle(p, pay, grid)
            assert abs(sup - orc) < 1e-9

    def test_interpolated_lattice_within_tolerance(self):
        p = gbm(n_steps=2, sigma=0.2)
        grid = GridSpec.from_bound(p, bound=3.0, points_per_side=4, delta=1e-4, refine_rounds=0)
        pay = PayoffSpec.call(1.0)
        exact = backward_induction_oracle(p, pay, grid)
        interp = backward_induction_oracle(p, pay, grid, lattice_nodes=4001)
        assert abs(exact - interp) < 1e-6

    def test_assignment_cap(self):
        p = gbm(n_steps=4, sigma=0.2)
        grid = GridSpec.from_bound(p, bound=3.0, points_per_side=16, refine_rounds=0)
        with pytest.raises(ValidationError):
            backward_induction_oracle(p, PayoffSpec.call(1.0), grid, assignment_cap=1000)


class TestHedgeFromPrice:
    def test_one_step_binomial_delta(self):
        # K = 0.3 keeps the value positive everywhere (no shift): the
        # certificate slope relates to the classical delta through
        # delta = alpha * V0 / S0.
        p = gbm()
        pay = PayoffSpec.call(0.3)
        res = price_sup(p, pay, corner_grid(p))
        hedge = hedge_from_price(p, pay, res)
        l, u = 0.5, 2.0
        v_d, v_u = l - 0.3, u - 0.3
        delta_classical = (v_u - v_d) / (p.s0 * (u - l))
        alpha = hedge.certificate.coefficients[0][0]
        assert hedge.certificate.shift == 0.0
        assert alpha * hedge.price / p.s0 == pytest.approx(delta_classical, abs=1e-12)

    def test_flat_payoff_zero_hedge(self):
        p = gbm()
        flat = PayoffSpec.table([0.5, 2.0], [0.9, 0.9])
        res = price_sup(p, flat, corner_grid(p, points=4))
        hedge = hedge_from_price(p, flat, res)
        if hedge.certificate.coefficients:
            for coeffs in hedge.certificate.coefficients:
                assert np.allclose(coeffs, 0.0, atol=1e-12)
        assert hedge.price == pytest.approx(0.9, abs=1e-12)

    def test_two_step_dominance_and_price(self):
        p = gbm(n_steps=2)
        pay = PayoffSpec.call(1.0)
        res = price_sup(p, pay, corner_grid(p))
        hedge = hedge_from_price(p, pay, res)
        horizon = hedge.filtration.n_steps
        terminal = hedge.value.at_atoms(hedge.filtration, horizon)
        want = evaluate_payoff(pay, hedge.terminal_prices)
        assert np.allclose(terminal, want, atol=1e-12)
        assert hedge.price == pytest.approx(res.price, abs=1e-12)
        assert np.allclose(hedge.decomposition.compensator.values[horizon], 0.0, atol=1e-10)


class TestBoundSweep:
    def test_call_sweep_monotone_and_matches_closed_form(self):
        p = gbm(sigma=0.2)
        sweep = bound_sweep(p, PayoffSpec.call(1.0), [2.0, 6.0, 10.0], points_per_side=32)
        prices = [pr for _, pr in sweep]
        assert prices == sorted(prices)
        # corner value for the symmetric grid: (cosh(sigma B) - 1)/sinh(sigma B)
        for (b, pr) in sweep:
            assert pr == pytest.approx(np.tanh(0.2 * b / 2.0), abs=1e-12)
