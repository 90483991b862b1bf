# # From saved tokens to money and emissions
#
# Cost is exact decimal arithmetic on a price per thousand prompt tokens.
# Emissions scale a reference energy figure by model size and grid intensity,
# so we report a low and a high estimate.

# +
from decimal import Decimal

from memreset import EnergyModel, PricingModel, estimate_impact, load_energy_models, load_pricing

# +
pricing = load_pricing()
energy = load_energy_models()
pricing, [m.label for m in energy]

# +
for saved in (10_000, 1_000_000, 150_000_000):
    est = estimate_impact(saved, pricing, energy)
    co2 = ", ".join(f"{label} {kg:.3g} kg" for label, kg in est.co2e_saved_by_model)
    print(f"{saved:>12,} tokens  {est.cost_saved} {est.currency_code}  {co2}")

# -
# A custom model: half the grid intensity halves the estimate.
clean = EnergyModel(7e9, 0.0001, 175e9, 0.25, "clean grid")
estimate_impact(1_000_000, PricingModel(Decimal("0.0010")), [energy[1], clean]).co2e_saved_by_model
