"""
Model recipes: parse ``probit`` / ``cart:max_depth=3`` style specs and fit them
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from components.base_component import ModelAdapter
from components.errors import ConfigurationError
from components.linear_models import LINEAR_KINDS, LinearModel, fit_logit, fit_ols, fit_probit
from components.tree import TreeModel, fit_cart
from utils.data_loader import EvalSample

RECIPE_KINDS = LINEAR_KINDS + ("cart",)
_INT_OPTIONS = {"max_depth", "min_depth", "min_leaf", "seed", "max_iter"}
_FLOAT_OPTIONS = {"tol"}
_BOOL_OPTIONS = {"intercept"}


def _parse_value(key: str, raw: str) -> Any:
    try:
        if key in _INT_OPTIONS:
            return int(raw)
        if key in _FLOAT_OPTIONS:
            return float(raw)
        if key in _BOOL_OPTIONS:
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
    except ValueError:
        raise ConfigurationError(f"option '{key}' cannot take the value '{raw}'")
    raise ConfigurationError(f"unknown model option '{key}'")


@dataclass(frozen=True)
class ModelRecipe:
    """A model kind plus fitting options; ``fit`` applies it to a training sample"""

    kind: str
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, spec: str) -> "ModelRecipe":
        text = spec.strip()
        if text.startswith("builtin:"):
            text = text[len("builtin:"):]
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        if kind not in RECIPE_KINDS:
            raise ConfigurationError(f"unknown model '{kind}' (expected one of {', '.join(RECIPE_KINDS)})")
        options: Dict[str, Any] = {}
        for item in filter(None, (part.strip() for part in rest.split(","))):
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigurationError(f"model option '{item}' must look like key=value")
            options[key.strip()] = _parse_value(key.strip(), raw.strip())
        if kind == "cart" and "max_depth" not in options:
            raise ConfigurationError("cart recipes need max_depth, e.g. cart:max_depth=3")
        return cls(kind, options)

    def fit(self, train: EvalSample) -> ModelAdapter:
        opts = dict(self.options)
        if self.kind == "ols":
            return fit_ols(train, intercept=opts.get("intercept", True))
        if self.kind in ("probit", "logit"):
            fitter = fit_probit if self.kind == "probit" else fit_logit
            return fitter(train, intercept=opts.get("intercept", True), max_iter=opts.get("max_iter"),
                          tol=opts.get("tol"))
        return fit_cart(train, max_depth=opts["max_depth"], min_depth=opts.get("min_depth"),
                        min_leaf=opts.get("min_leaf", 1), seed=opts.get("seed", 0))

    def __str__(self) -> str:
        if not self.options:
            return self.kind
        return self.kind + ":" + ",".join(f"{k}={v}" for k, v in sorted(self.options.items()))


def model_from_dict(record: Dict[str, Any]) -> ModelAdapter:
    """Rebuild a built-in model from its ``to_dict()`` record"""
    kind = record.get("kind")
    params = record.get("parameters", {})
    threshold = float(record.get("label_threshold", 0.5))
    if kind in LINEAR_KINDS:
        return LinearModel(kind, params["coef"], params.get("intercept", 0.0), record["feature_names"],
                           task=record.get("task"), label_threshold=threshold,
                           fit_intercept=params.get("fit_intercept", True))
    if kind == "cart":
        return TreeModel.from_parameters(params, record["feature_names"], threshold)
    raise ConfigurationError(f"cannot rebuild a model of kind '{kind}' from JSON")


def save_model(model: ModelAdapter, path: Union[str, Path]) -> Path:
    file_path = Path(path)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(model.to_dict(), f, indent=2)
    return file_path


def load_model(path: Union[str, Path], label_threshold: Optional[float] = None) -> ModelAdapter:
    file_path = Path(path)
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            record = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Model file not found: {file_path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in model file {file_path}: {e}")
    model = model_from_dict(record)
    return model.with_threshold(label_threshold) if label_threshold is not None else model
