"""Per-image-size accuracy/latency predictors, search guidance and adjustment hints."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import regression
from .features import (feature_names, featurize, featurize_unchecked, identifiable_features,
                       slot_features)
from .regression import FitDiagnostics, InsufficientData, RegressionModel
from .search_space import Architecture, ParamWeights, SearchSpaceSpec, validate

BANK_FORMAT = "foxnas-bank/1"
DEFAULT_FLOOR = 0.05
# Without a ceiling a handful of very significant slots soak up every pick and
# the forced value change makes the early search oscillate between two states.
DEFAULT_CAP = 1.0


class BankError(ValueError):
    pass


class NoPredictor(BankError):
    def __init__(self, image_size: int):
        super().__init__(f"no predictor for image size {image_size}")
        self.image_size = image_size


@dataclass(frozen=True)
class PredictorPair:
    accuracy: RegressionModel
    latency: RegressionModel
    accuracy_diagnostics: FitDiagnostics | None = field(default=None, compare=False)
    latency_diagnostics: FitDiagnostics | None = field(default=None, compare=False)


@dataclass(frozen=True)
class PredictorBank:
    spec: SearchSpaceSpec
    pairs: dict[int, PredictorPair]
    feature_index: tuple[int, ...]  # positions of the fitted features in the full vector
    _weights: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = len(feature_names(self.spec))
        weights = {}
        for size, pair in self.pairs.items():
            full = []
            for model in (pair.accuracy, pair.latency):
                w = np.zeros(m)
                w[list(self.feature_index)] = model.coefficients[1:]
                full.append((model.intercept, w))
            weights[size] = tuple(full)
        object.__setattr__(self, "_weights", weights)

    @property
    def fingerprint(self) -> str:
        return self.spec.fingerprint()

    @property
    def trained_sizes(self) -> list[int]:
        return sorted(self.pairs)

    @property
    def untrained_sizes(self) -> list[int]:
        return [s for s in self.spec.image_sizes if s not in self.pairs]

    @property
    def fitted_feature_names(self) -> list[str]:
        names = feature_names(self.spec)
        return [names[i] for i in self.feature_index]

    def pair(self, image_size: int) -> PredictorPair:
        try:
            return self.pairs[image_size]
        except KeyError:
            raise NoPredictor(image_size) from None

    def predict_features(self, image_size: int, x) -> tuple[float, float]:
        try:
            (a0, aw), (l0, lw) = self._weights[image_size]
        except KeyError:
            raise NoPredictor(image_size) from None
        x = np.asarray(x, dtype=float)
        return float(a0 + aw @ x), float(l0 + lw @ x)

    def predict_fast(self, arch: Architecture) -> tuple[float, float]:
        """Prediction without domain validation; callers guarantee a valid architecture."""
        return self.predict_features(arch.image_size, featurize_unchecked(arch))

    def to_dict(self) -> dict:
        return {
            "format": BANK_FORMAT,
            "spec_fingerprint": self.fingerprint,
            "spec": self.spec.to_dict(),
            "feature_names": feature_names(self.spec),
            "fitted_features": self.fitted_feature_names,
            "models": [
                {"image_size": size, "accuracy": self.pairs[size].accuracy.to_dict(),
                 "latency": self.pairs[size].latency.to_dict()}
                for size in self.trained_sizes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict, spec: SearchSpaceSpec) -> "PredictorBank":
        if data.get("format") != BANK_FORMAT:
            raise BankError(f"unsupported bank format {data.get('format')!r}")
        if data.get("spec_fingerprint") != spec.fingerprint():
            raise BankError("bank was trained on a different search space "
                            "(spec fingerprint mismatch); refusing to load")
        names = feature_names(spec)
        fitted = data["fitted_features"]
        pairs = {
            int(m["image_size"]): PredictorPair(RegressionModel.from_dict(m["accuracy"]),
                                                RegressionModel.from_dict(m["latency"]))
            for m in data["models"]
        }
        return cls(spec, pairs, tuple(names.index(f) for f in fitted))

    @classmethod
    def from_json(cls, text: str, spec: SearchSpaceSpec) -> "PredictorBank":
        return cls.from_dict(json.loads(text), spec)


def train_bank(records: Iterable, spec: SearchSpaceSpec) -> PredictorBank:
    """Fit one accuracy and one latency model per image size present in ``records``.

    Records need ``arch``, ``accuracy`` and ``latency_ms`` attributes.
    """
    groups: dict[int, list] = defaultdict(list)
    for i, rec in enumerate(records):
        problems = validate(rec.arch, spec)
        if problems:
            raise BankError(f"record {i}: " + "; ".join(problems))
        groups[rec.arch.image_size].append(rec)

    index = identifiable_features(spec)
    names = feature_names(spec)
    fitted_names = [names[i] for i in index]
    pairs = {}
    for size in sorted(groups):
        recs = groups[size]
        X = np.array([featurize_unchecked(r.arch) for r in recs])[:, list(index)]
        k = X.shape[1] + 1
        if len(recs) <= k:
            raise InsufficientData(len(recs), k, context=f"image size {size}")
        pair_models = []
        for label, attr in (("accuracy", "accuracy"), ("latency", "latency_ms")):
            y = np.array([getattr(r, attr) for r in recs], dtype=float)
            model = regression.fit(X, y, fitted_names, target_label=label,
                                   context=f"image size {size}")
            pair_models.append((model, regression.residual_report(model, X, y)))
        (acc, acc_d), (lat, lat_d) = pair_models
        pairs[size] = PredictorPair(acc, lat, acc_d, lat_d)
    return PredictorBank(spec, pairs, index)


def predict_performance(bank: PredictorBank, arch: Architecture) -> tuple[float, float]:
    """Predicted (accuracy %, latency ms) for a validated architecture."""
    x = featurize(arch, bank.spec)
    return bank.predict_features(arch.image_size, x)


def feature_significance(bank: PredictorBank, image_size: int,
                         target: str = "accuracy") -> dict[str, tuple[float, float]]:
    """Map every feature name to (t, p) in the chosen model; unfitted features get (0, 1)."""
    pair = bank.pair(image_size)
    model = pair.accuracy if target == "accuracy" else pair.latency
    t = regression.t_values(model)[1:]
    p = regression.p_values(t, model.df)
    out = {name: (0.0, 1.0) for name in feature_names(bank.spec)}
    out.update({name: (float(tv), float(pv))
                for name, tv, pv in zip(model.feature_names, t, p)})
    return out


def guidance_weights(bank: PredictorBank, spec: SearchSpaceSpec, image_size: int,
                     floor: float = DEFAULT_FLOOR, cap: float | None = DEFAULT_CAP,
                     alpha: float = regression.SIGNIFICANCE) -> tuple[ParamWeights, ParamWeights]:
    """Early-phase and late-phase slot weights for the annealer.

    Early phase: each slot takes the largest |t| among the accuracy-model
    features it drives that are significant at ``alpha``, floored at ``floor``
    and capped at ``cap`` (None disables the cap). Late phase: every slot weighs 1.
    """
    if floor <= 0:
        raise ValueError("floor must be positive so every slot stays reachable")
    sig = feature_significance(bank, image_size, "accuracy")
    finite = [abs(t) for t, _ in sig.values() if math.isfinite(t)]
    inf_stand_in = cap if cap is not None else 10.0 * max(finite + [1.0])
    weights = []
    for name, feats in slot_features(spec).items():
        best = 0.0
        for f in feats:
            t, p = sig[f]
            if p < alpha:
                best = max(best, abs(t) if math.isfinite(t) else inf_stand_in)
        w = max(best, floor)
        if cap is not None:
            w = min(w, cap)
        weights.append(w)
    return ParamWeights(tuple(weights)), ParamWeights.uniform(spec)


@dataclass(frozen=True)
class Adjustment:
    slot: str
    delta_steps: int
    old_value: int
    new_value: int
    latency_delta: float
    accuracy_delta: float
    latency_p: float
    accuracy_p: float
    architecture: Architecture = field(repr=False, compare=False)


@dataclass
class AdjustmentReport:
    adjustments: list[Adjustment]
    predicted_latency: float
    budget: float
    insufficient: bool = False

    def __iter__(self):
        return iter(self.adjustments)

    def __len__(self):
        return len(self.adjustments)

    def __getitem__(self, i):
        return self.adjustments[i]


def suggest_adjustment(bank: PredictorBank, arch: Architecture, latency_budget: float,
                       alpha: float = regression.SIGNIFICANCE) -> AdjustmentReport:
    """Rank single-slot, single-step moves that cut predicted latency.

    A move is kept when it lowers predicted latency and at least one feature it
    changes is significant in the latency model. Moves that cost no predicted
    accuracy come first (largest latency cut first); the rest follow by
    ascending accuracy loss per millisecond saved. ``insufficient`` is set when
    no kept move alone brings latency below the budget.
    """
    spec = bank.spec
    base_acc, base_lat = predict_performance(bank, arch)
    if base_lat <= latency_budget:
        return AdjustmentReport([], base_lat, latency_budget)
    lat_sig = feature_significance(bank, arch.image_size, "latency")
    acc_sig = feature_significance(bank, arch.image_size, "accuracy")
    names = feature_names(spec)
    base_x = np.array(featurize_unchecked(arch))
    slots = arch.slots()

    moves = []
    for idx, (slot, cands) in enumerate(zip(spec.slot_names, spec.slot_candidates)):
        if idx == 0:
            continue  # image size selects the predictor rather than entering it
        pos = cands.index(slots[idx])
        for step in (-1, 1):
            if not 0 <= pos + step < len(cands):
                continue
            values = list(slots)
            values[idx] = cands[pos + step]
            new_arch = Architecture.from_slots(spec, values)
            new_x = np.array(featurize_unchecked(new_arch))
            changed = [names[i] for i in np.flatnonzero(new_x != base_x)]
            if not changed:
                continue
            lat_p = min(lat_sig[f][1] for f in changed)
            if lat_p >= alpha:
                continue
            acc, lat = bank.predict_features(arch.image_size, new_x)
            d_lat, d_acc = lat - base_lat, acc - base_acc
            if d_lat >= 0:
                continue
            moves.append(Adjustment(slot, step, slots[idx], cands[pos + step], d_lat, d_acc,
                                    lat_p, min(acc_sig[f][1] for f in changed), new_arch))

    def rank(a: Adjustment):
        loss = -a.accuracy_delta
        if loss <= 0:
            return (0, a.latency_delta, 0.0)
        return (1, loss / -a.latency_delta, a.latency_delta)

    moves.sort(key=rank)
    gap = base_lat - latency_budget
    insufficient = not any(-m.latency_delta >= gap for m in moves)
    return AdjustmentReport(moves, base_lat, latency_budget, insufficient)
