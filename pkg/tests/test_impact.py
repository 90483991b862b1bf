from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memreset.impact import (
    ConfigError,
    EnergyModel,
    PricingModel,
    estimate_co2e,
    estimate_cost,
    estimate_impact,
    load_energy_models,
    load_pricing,
)


@pytest.mark.parametrize(
    "tokens, price, expected",
    [
        (0, "0.50", Decimal("0")),
        (1_000_000, "0.50", Decimal("500.00")),
        (144_247, "0.03", Decimal("4.32741")),
    ],
)
def test_cost_examples(tokens, price, expected):
    assert estimate_cost(tokens, PricingModel(Decimal(price))) == expected


def test_co2e_examples():
    model = EnergyModel(1e9, 0.002, 2e9, 0.4, "x")
    assert estimate_co2e(0, model) == 0
    assert estimate_co2e(1_000_000, model) == pytest.approx(1.6, rel=1e-12)


def test_invalid_models():
    with pytest.raises(ConfigError):
        PricingModel(Decimal("-1"))
    with pytest.raises(ConfigError):
        EnergyModel(0, 1, 1, 1)


energy_st = st.builds(
    EnergyModel,
    st.floats(1e6, 1e12),
    st.floats(1e-7, 1.0),
    st.floats(1e6, 1e12),
    st.floats(0.01, 1.5),
)


@given(st.integers(0, 10**10), st.integers(0, 10**10), energy_st)
@settings(max_examples=200, deadline=None)
def test_co2e_linear(a, b, model):
    assert estimate_co2e(a + b, model) == pytest.approx(
        estimate_co2e(a, model) + estimate_co2e(b, model), rel=1e-9, abs=1e-12
    )


@given(st.integers(1, 10**9), energy_st, st.sampled_from(range(4)), st.floats(1.001, 10))
@settings(max_examples=200, deadline=None)
def test_co2e_monotone_in_factors(tokens, model, which, factor):
    import dataclasses

    # reference_params sits in the denominator; scaling it down raises the estimate
    names = ["reference_energy_per_1k_tokens", "target_params", "grid_intensity", "reference_params"]
    name = names[which]
    scale = factor if which < 3 else 1 / factor
    bigger = dataclasses.replace(model, **{name: getattr(model, name) * scale})
    assert estimate_co2e(tokens, bigger) > estimate_co2e(tokens, model)


@given(st.integers(0, 10**9), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_range_brackets_intermediate_models(tokens, s, t):
    low = EnergyModel(7e9, 0.00004, 70e9, 0.2, "low")
    high = EnergyModel(7e9, 0.0001, 175e9, 0.5, "high")
    mid = EnergyModel(
        7e9,
        low.reference_energy_per_1k_tokens + s * (high.reference_energy_per_1k_tokens - low.reference_energy_per_1k_tokens),
        low.target_params + t * (high.target_params - low.target_params),
        low.grid_intensity + s * (high.grid_intensity - low.grid_intensity),
        "mid",
    )
    lo, md, hi = (estimate_co2e(tokens, m) for m in (low, mid, high))
    assert lo * (1 - 1e-12) <= md <= hi * (1 + 1e-12)


def test_bundled_config():
    pricing = load_pricing()
    assert pricing.price_per_1k_prompt_tokens == Decimal("0.0015")
    assert load_pricing(model="gpt-4-1106-preview").price_per_1k_prompt_tokens == Decimal("0.0100")
    assert [m.label for m in load_energy_models()] == ["low", "high"]
    with pytest.raises(ConfigError):
        load_pricing(model="nope")


def test_config_files(tmp_path):
    p = tmp_path / "pricing.json"
    p.write_text('{"currency": "EUR", "models": {"m": {"price_per_1k_prompt_tokens": 0.1}}}')
    pricing = load_pricing(p)
    assert (pricing.price_per_1k_prompt_tokens, pricing.currency_code) == (Decimal("0.1"), "EUR")
    e = tmp_path / "energy.json"
    e.write_text('{"models": [{"label": "a", "reference_params": 1, "reference_energy_per_1k_tokens": 1, "target_params": 1}]}')
    with pytest.raises(ConfigError):
        load_energy_models(e)
    with pytest.raises(ConfigError):
        load_energy_models(tmp_path / "missing.json")


def test_estimate_impact():
    est = estimate_impact(2000, PricingModel(Decimal("0.5"), "USD"), [EnergyModel(1, 1, 2, 3, "x")])
    assert est.cost_saved == Decimal("1.0")
    assert est.co2e_saved_by_model == [("x", 12.0)]
    assert est.to_dict()["cost_saved"] == "1.0000"


def test_cost_matches_fraction_arithmetic():
    for tokens, price in [(1, "0.0015"), (999, "0.002"), (123_456_789, "0.0100")]:
        got = estimate_cost(tokens, PricingModel(Decimal(price)))
        assert Fraction(got) == Fraction(tokens, 1000) * Fraction(price)
