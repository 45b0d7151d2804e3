import math
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from bakup_sim.errors import OutOfRange
from bakup_sim.fixed import sqrt
from bakup_sim.strategies import (
    EPSILONS,
    Scenario,
    Strategy,
    StrategySpec,
    build_positions,
    denormalize,
    interval_prices,
    loss_closed_form,
    loss_simulated,
    make_pool,
    normalize_price,
    sweep,
    width_bands,
    worst_cases,
    worst_loss,
)

NO_CAT, CAT = Scenario.NO_CATASTROPHE, Scenario.CATASTROPHE


def spec(kind, eps, x, w=0.3):
    return StrategySpec(kind, eps, x, w)


@pytest.mark.parametrize("eps", EPSILONS)
def test_normalize_fixed_points(eps):
    assert normalize_price(1.0, eps) == pytest.approx(0.5, abs=1e-15)
    assert normalize_price((1 - eps) / eps, eps) == 1.0
    assert denormalize(1.0, eps) == (1 - eps) / eps
    for x in (0.0, 0.13, 0.5, 0.77, 1.0):
        assert normalize_price(denormalize(x, eps), eps) == pytest.approx(x, abs=1e-14)


def test_denormalize_reference_point():
    assert denormalize(0.7, 0.19) == pytest.approx(1.786, abs=5e-4)


def test_normalize_out_of_range():
    with pytest.raises(OutOfRange):
        normalize_price(200, 0.01)
    with pytest.raises(OutOfRange):
        denormalize(1.5, 0.01)
    with pytest.raises(OutOfRange):
        spec(Strategy.UNIFORM, 0.01, 1.5)


def test_uniform_liquidity_at_par():
    s = spec(Strategy.UNIFORM, 0.01, 0.5)
    pool = make_pool(s)
    dep = build_positions(s, pool)
    liq = {side: pool.positions[pid].liquidity for (side, _, _), pid in zip(dep.intervals, dep.position_ids)}
    one = Decimal(1)
    l_p = one / (one - one / sqrt(99))
    l_u = one / (one - sqrt(one / 99))
    assert abs(liq["P"] - l_p) / l_p < Decimal("1e-15")
    assert abs(liq["U"] - l_u) / l_u < Decimal("1e-15")
    assert dep.idle_p < Decimal("1e-17") and dep.idle_u < Decimal("1e-17")


def test_edges_width_limits():
    # small width hugs the entry (approaches uniform); large width pushes to the edges
    lo, hi = 0.01 / 0.99, 99
    p_l, p, p_r = interval_prices(spec(Strategy.EDGES, 0.01, 0.5, 1e-9))
    assert p_l == pytest.approx(p, rel=1e-6) and p_r == pytest.approx(p, rel=1e-6)
    p_l, p, p_r = interval_prices(spec(Strategy.EDGES, 0.01, 0.5, 1 - 1e-9))
    assert p_l == pytest.approx(lo, rel=1e-6) and p_r == pytest.approx(hi, rel=1e-6)


def test_around_entry_zero_width_guard():
    with pytest.raises(OutOfRange):
        spec(Strategy.AROUND_ENTRY, 0.01, 0.5, 0.0)


def test_pool_price_must_match_entry():
    s = spec(Strategy.UNIFORM, 0.01, 0.3)
    with pytest.raises(OutOfRange):
        build_positions(s, make_pool(spec(Strategy.UNIFORM, 0.01, 0.4)))


@pytest.mark.parametrize("kind,eps,x,w,scen,loss", [
    (Strategy.UNIFORM, 0.01, 1.0, 0.3, NO_CAT, 0.98),
    (Strategy.UNIFORM, 0.19, 1.0, 0.3, NO_CAT, 0.62),
    (Strategy.EDGES, 0.19, 1.0, 0.3, NO_CAT, 0.516456),
    (Strategy.AROUND_ENTRY, 0.01, 1.0, 0.3, NO_CAT, 0.989599),
])
def test_closed_form_reference_values(kind, eps, x, w, scen, loss):
    assert loss_closed_form(spec(kind, eps, x, w), scen).loss == pytest.approx(loss, abs=1e-6)


def test_edges_reference_interval():
    p_l, p, p_r = interval_prices(spec(Strategy.EDGES, 0.19, 1.0))
    assert p_l == pytest.approx(1.786, abs=5e-4)
    assert 0.19 + math.sqrt(0.19 * 0.81 / p_l) == pytest.approx(0.4836, abs=1e-4)


def test_simulated_uniform_at_par():
    rep = loss_simulated(spec(Strategy.UNIFORM, 0.01, 0.5), NO_CAT)
    assert rep.terminal_value == pytest.approx(0.01 + math.sqrt(0.0099), rel=1e-9)
    assert rep.terminal_value == pytest.approx(0.1095, abs=5e-5)


def test_zero_steps_is_hold():
    for kind in Strategy:
        rep = loss_simulated(spec(kind, 0.07, 0.4), CAT, steps=0)
        assert abs(rep.loss) < 1e-15


def test_sweep_single_point_and_empty():
    rows = sweep([0.07], [Strategy.EDGES], [CAT], [0.25], [0.3])
    assert len(rows) == 1
    assert rows[0].loss == pytest.approx(loss_closed_form(spec(Strategy.EDGES, 0.07, 0.25), CAT).loss)
    with pytest.raises(ValueError):
        sweep([], entries=[0.5])


def test_sweep_uniform_endpoints():
    rows = sweep(EPSILONS, [Strategy.UNIFORM], list(Scenario), [0.0, 1.0], [0.3])
    worst = {(w.strategy, w.epsilon): w.loss for w in worst_cases(rows)}
    assert worst[("uniform", 0.01)] == pytest.approx(0.98)
    assert worst[("uniform", 0.19)] == pytest.approx(0.62)


def test_parallel_sweep_matches_serial():
    kwargs = dict(epsilons=[0.01, 0.13], entries=[0.0, 0.3, 1.0], widths=[0.1, 0.3])
    assert sweep(workers=1, **kwargs) == sweep(workers=2, **kwargs)


def test_width_bands_envelope():
    rows = sweep([0.07], [Strategy.EDGES], [NO_CAT], [0.8])
    (band,) = width_bands(rows)
    losses = sorted(r.loss for r in rows)
    assert (band.loss_min, band.loss_median, band.loss_max) == (losses[0], losses[2], losses[-1])


# --- properties ------------------------------------------------------------

kinds = st.sampled_from(list(Strategy))
eps_st = st.sampled_from(EPSILONS)
x_st = st.floats(0, 1)
w_st = st.floats(0.1, 0.5)


@given(eps_st)
def test_endpoint_identities(eps):
    assert loss_closed_form(spec(Strategy.UNIFORM, eps, 0.0), NO_CAT).loss == pytest.approx(0, abs=1e-12)
    assert loss_closed_form(spec(Strategy.UNIFORM, eps, 1.0), CAT).loss == pytest.approx(0, abs=1e-12)


@given(eps_st, x_st, x_st)
def test_uniform_monotone_in_entry(eps, a, b):
    a, b = min(a, b), max(a, b)
    nc = [loss_closed_form(spec(Strategy.UNIFORM, eps, x), NO_CAT).loss for x in (a, b)]
    c = [loss_closed_form(spec(Strategy.UNIFORM, eps, x), CAT).loss for x in (a, b)]
    assert nc[0] <= nc[1] + 1e-12
    assert c[0] >= c[1] - 1e-12


@given(kinds, eps_st, x_st, w_st, st.sampled_from(list(Scenario)))
def test_value_in_unit_interval(kind, eps, x, w, scen):
    v = loss_closed_form(spec(kind, eps, x, w), scen).terminal_value
    assert 0 < v <= 1 + 1e-12


@pytest.mark.parametrize("kind", list(Strategy))
def test_worst_loss_decreases_with_epsilon(kind):
    losses = [worst_loss(kind, e) for e in EPSILONS]
    assert all(a > b for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("eps", EPSILONS)
def test_strategy_ordering_at_worst_entries(eps):
    assert worst_loss(Strategy.AROUND_ENTRY, eps) >= worst_loss(Strategy.UNIFORM, eps) >= worst_loss(Strategy.EDGES, eps)


@pytest.mark.parametrize("kind", list(Strategy))
def test_vanishing_floor_loses_everything(kind):
    loss = worst_loss(kind, 1e-6)
    assert loss > 0.99
    assert loss < 1


@settings(max_examples=25, deadline=None)
@given(kinds, eps_st, x_st, w_st, st.sampled_from(list(Scenario)))
def test_simulated_matches_closed_form(kind, eps, x, w, scen):
    s = spec(kind, eps, x, w)
    closed = loss_closed_form(s, scen).terminal_value
    sim = loss_simulated(s, scen, steps=7).terminal_value
    assert sim == pytest.approx(closed, rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(kinds, eps_st, x_st, st.sampled_from(list(Scenario)))
def test_losses_scale_linearly(kind, eps, x, scen):
    s = spec(kind, eps, x)
    one = loss_simulated(s, scen, steps=4, endowment=1)
    seven = loss_simulated(s, scen, steps=4, endowment=7)
    assert seven.terminal_value == pytest.approx(one.terminal_value, rel=1e-12)
    assert seven.loss == pytest.approx(one.loss, rel=1e-9, abs=1e-15)
