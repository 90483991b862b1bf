"""Financial and CO2e value of saved prompt tokens.

Cost uses exact decimals. Emissions are extrapolated from the measured
inference energy of a reference model, scaled linearly by parameter count
and multiplied by a grid carbon intensity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Sequence


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PricingModel:
    price_per_1k_prompt_tokens: Decimal
    currency_code: str = "USD"

    def __post_init__(self):
        price = Decimal(str(self.price_per_1k_prompt_tokens))
        if not price.is_finite() or price < 0:
            raise ConfigError("price_per_1k_prompt_tokens must be a finite value >= 0")
        object.__setattr__(self, "price_per_1k_prompt_tokens", price)


@dataclass(frozen=True)
class EnergyModel:
    reference_params: float
    reference_energy_per_1k_tokens: float  # kWh
    target_params: float
    grid_intensity: float  # kg CO2e per kWh
    label: str = ""

    def __post_init__(self):
        for name in ("reference_params", "reference_energy_per_1k_tokens", "target_params", "grid_intensity"):
            if not (getattr(self, name) > 0):
                raise ConfigError(f"{name} must be > 0")

    @property
    def kwh_per_1k_tokens(self) -> float:
        return self.reference_energy_per_1k_tokens * (self.target_params / self.reference_params)


@dataclass
class ImpactEstimate:
    tokens_saved: int
    cost_saved: Decimal
    currency_code: str = "USD"
    co2e_saved_by_model: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tokens_saved": self.tokens_saved,
            "cost_saved": str(self.cost_saved),
            "currency": self.currency_code,
            "co2e_kg": [{"label": label, "kg": kg} for label, kg in self.co2e_saved_by_model],
        }


def estimate_cost(tokens_saved: int, pricing: PricingModel) -> Decimal:
    """``tokens_saved / 1000 * price``, exact."""
    return (Decimal(int(tokens_saved)) * pricing.price_per_1k_prompt_tokens).scaleb(-3)


def estimate_co2e(tokens_saved: int, model: EnergyModel) -> float:
    """Kilograms of CO2e attributable to ``tokens_saved`` prompt tokens."""
    return tokens_saved / 1000 * model.reference_energy_per_1k_tokens * (
        model.target_params / model.reference_params
    ) * model.grid_intensity


def estimate_impact(
    tokens_saved: int, pricing: PricingModel, energy_models: Sequence[EnergyModel]
) -> ImpactEstimate:
    return ImpactEstimate(
        tokens_saved=tokens_saved,
        cost_saved=estimate_cost(tokens_saved, pricing),
        currency_code=pricing.currency_code,
        co2e_saved_by_model=[(m.label, estimate_co2e(tokens_saved, m)) for m in energy_models],
    )


def _load_json(path: str | Path | None, default_name: str):
    try:
        if path is None:
            text = resources.files("memreset.data").joinpath(default_name).read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return json.loads(text)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load {path or default_name}: {exc}") from exc


def load_pricing(path: str | Path | None = None, model: str | None = None) -> PricingModel:
    """Read a pricing table and pick ``model`` (or the table's default entry).

    The file holds ``{"currency": ..., "default": name, "models": {name:
    {"price_per_1k_prompt_tokens": "0.0015"}}}``. Prices are read as strings
    or numbers and converted to ``Decimal`` without going through float.
    """
    data = _load_json(path, "pricing.json")
    try:
        models = data["models"]
        name = model or data.get("default") or next(iter(models))
        entry = models[name]
        price = entry["price_per_1k_prompt_tokens"]
        currency = entry.get("currency", data.get("currency", "USD"))
    except (KeyError, TypeError, StopIteration) as exc:
        raise ConfigError(f"pricing table has no usable entry for {model!r}") from exc
    return PricingModel(Decimal(str(price)), currency)


def load_energy_models(path: str | Path | None = None) -> list[EnergyModel]:
    """Read the list of energy presets (``{"models": [{...}, ...]}``)."""
    data = _load_json(path, "energy.json")
    try:
        return [
            EnergyModel(
                reference_params=float(m["reference_params"]),
                reference_energy_per_1k_tokens=float(m["reference_energy_per_1k_tokens"]),
                target_params=float(m["target_params"]),
                grid_intensity=float(m["grid_intensity"]),
                label=str(m["label"]),
            )
            for m in data["models"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid energy model file: {exc}") from exc
