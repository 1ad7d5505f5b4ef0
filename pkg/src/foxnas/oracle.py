"""Planted ground-truth landscapes and exhaustive search for checking the annealer."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import UNIT_FEATURES, feature_names, featurize_unchecked, identifiable_features
from .predictor_bank import PredictorBank, PredictorPair
from .regression import RegressionModel
from .search_space import (Architecture, EnumerationTooLarge, SearchSpaceSpec, cardinality,
                           unit_choices, validate)


@dataclass(frozen=True)
class PlantedModel:
    """True linear coefficients (intercept first) per image size, plus label noise levels."""

    spec: SearchSpaceSpec
    accuracy: dict[int, tuple[float, ...]]
    latency: dict[int, tuple[float, ...]]
    noise_acc: float = 0.0
    noise_lat: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        k = len(feature_names(self.spec)) + 1
        for label, table in (("accuracy", self.accuracy), ("latency", self.latency)):
            if set(table) != set(self.spec.image_sizes):
                raise ValueError(f"{label} coefficients must cover every image size")
            for size, coefs in table.items():
                if len(coefs) != k:
                    raise ValueError(f"{label}[{size}] has {len(coefs)} coefficients, expected {k}")
        if self.noise_acc < 0 or self.noise_lat < 0:
            raise ValueError("noise levels must be nonnegative")

    def with_noise(self, noise_acc: float, noise_lat: float) -> "PlantedModel":
        return PlantedModel(self.spec, self.accuracy, self.latency, noise_acc, noise_lat, self.seed)

    @classmethod
    def uniform_size(cls, spec: SearchSpaceSpec, accuracy: Sequence[float],
                     latency: Sequence[float], **kw) -> "PlantedModel":
        """Same coefficients for every image size."""
        acc = tuple(float(v) for v in accuracy)
        lat = tuple(float(v) for v in latency)
        return cls(spec, {s: acc for s in spec.image_sizes}, {s: lat for s in spec.image_sizes}, **kw)

    @classmethod
    def from_features(cls, spec: SearchSpaceSpec, acc_intercept: float, acc: dict[str, float],
                      lat_intercept: float, lat: dict[str, float], **kw) -> "PlantedModel":
        """Build from named coefficients; unnamed features get 0."""
        names = feature_names(spec)
        unknown = (set(acc) | set(lat)) - set(names)
        if unknown:
            raise ValueError(f"unknown feature names: {sorted(unknown)}")
        a = [acc_intercept] + [acc.get(n, 0.0) for n in names]
        b = [lat_intercept] + [lat.get(n, 0.0) for n in names]
        return cls.uniform_size(spec, a, b, **kw)

    @classmethod
    def random(cls, spec: SearchSpaceSpec, rng: np.random.Generator, low: float = -1.0,
               high: float = 1.0, intercepts: tuple[float, float] = (70.0, 30.0),
               **kw) -> "PlantedModel":
        """Coefficients drawn uniformly in [low, high], independently per image size.

        Structurally redundant features get 0 so the truth stays identifiable.
        """
        m = len(feature_names(spec))
        mask = np.zeros(m)
        mask[list(identifiable_features(spec))] = 1.0
        acc, lat = {}, {}
        for s in spec.image_sizes:
            acc[s] = (intercepts[0], *(rng.uniform(low, high, m) * mask))
            lat[s] = (intercepts[1], *(rng.uniform(low, high, m) * mask))
        return cls(spec, acc, lat, **kw)

    @classmethod
    def default(cls, spec: SearchSpaceSpec, rng: np.random.Generator, **kw) -> "PlantedModel":
        """A plausible landscape: larger images, deeper and wider units raise both targets.

        Accuracy sits roughly in the 65-80 % band; latency scales with image area.
        """
        m = spec.num_units
        names = feature_names(spec)
        keep = set(identifiable_features(spec))
        scale = {"D": (0.2, 0.6), "E^avg": (0.1, 0.4), "K^avg": (0.02, 0.15),
                 "E^total": (0.0, 0.05), "E^total*D": (-0.01, 0.01), "K^avg*D": (-0.02, 0.02)}
        lat_scale = {"D": (0.6, 1.8), "E^avg": (0.2, 0.6), "K^avg": (0.05, 0.3),
                     "E^total": (0.05, 0.2), "E^total*D": (0.0, 0.03), "K^avg*D": (0.0, 0.06)}
        smallest, largest = spec.image_sizes[0], spec.image_sizes[-1]
        acc, lat = {}, {}
        for s in spec.image_sizes:
            frac = 0.0 if largest == smallest else (s - smallest) / (largest - smallest)
            area = (s / 224.0) ** 2
            a = [58.0 + 8.0 * frac]
            b = [2.0 * area]
            for i, name in enumerate(names):
                if i not in keep:
                    a.append(0.0)
                    b.append(0.0)
                    continue
                kind = name.rsplit("_", 1)[0] if not name.startswith(("E_", "K_")) else name[0]
                if kind in ("E", "K"):  # bridge terms
                    a.append(float(rng.uniform(0.0, 0.2)))
                    b.append(float(rng.uniform(0.1, 0.5) * area))
                else:
                    lo, hi = scale[kind]
                    a.append(float(rng.uniform(lo, hi)) / max(1.0, m / 5))
                    lo, hi = lat_scale[kind]
                    b.append(float(rng.uniform(lo, hi)) * area)
            acc[s] = tuple(a)
            lat[s] = tuple(b)
        return cls(spec, acc, lat, **kw)

    def to_dict(self) -> dict:
        return {
            "spec_fingerprint": self.spec.fingerprint(),
            "feature_names": feature_names(self.spec),
            "noise_acc": self.noise_acc,
            "noise_lat": self.noise_lat,
            "seed": self.seed,
            "accuracy": {str(s): list(v) for s, v in sorted(self.accuracy.items())},
            "latency": {str(s): list(v) for s, v in sorted(self.latency.items())},
        }

    @classmethod
    def from_dict(cls, data: dict, spec: SearchSpaceSpec) -> "PlantedModel":
        if data["spec_fingerprint"] != spec.fingerprint():
            raise ValueError("planted model belongs to a different search space")
        return cls(spec, {int(s): tuple(v) for s, v in data["accuracy"].items()},
                   {int(s): tuple(v) for s, v in data["latency"].items()},
                   data["noise_acc"], data["noise_lat"], data.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def evaluate_true(planted: PlantedModel, arch: Architecture) -> tuple[float, float]:
    """Noiseless (accuracy, latency) under the planted coefficients."""
    problems = validate(arch, planted.spec)
    if problems:
        raise ValueError("; ".join(problems))
    x = np.array(featurize_unchecked(arch))
    a = np.asarray(planted.accuracy[arch.image_size])
    b = np.asarray(planted.latency[arch.image_size])
    return float(a[0] + a[1:] @ x), float(b[0] + b[1:] @ x)


def planted_bank(planted: PlantedModel, n: int = 300, standard_error: float = 0.01) -> PredictorBank:
    """A bank whose models carry the planted coefficients exactly.

    Every coefficient gets the same standard error, so its t-value is simply
    coefficient / standard_error; ``n`` only sets the degrees of freedom.
    """
    spec = planted.spec
    index = identifiable_features(spec)
    names = feature_names(spec)
    dropped = [i for i in range(len(names)) if i not in index]
    fitted = tuple(names[i] for i in index)
    pairs = {}
    for size in spec.image_sizes:
        models = []
        for label, coefs in (("accuracy", planted.accuracy[size]), ("latency", planted.latency[size])):
            if any(coefs[1 + i] != 0.0 for i in dropped):
                raise ValueError(f"{label} coefficients on structurally redundant features must be 0")
            beta = (coefs[0],) + tuple(coefs[1 + i] for i in index)
            models.append(RegressionModel(beta, (standard_error,) * len(beta), n, fitted,
                                          1.0, 1.0, 0.0, 0.0, target_label=label))
        pairs[size] = PredictorPair(*models)
    return PredictorBank(spec, pairs, index)


@dataclass(frozen=True)
class OracleResult:
    architecture: Architecture | None
    accuracy: float
    latency: float
    evaluated: int
    feasible: int

    @property
    def infeasible(self) -> bool:
        return self.architecture is None


def _unit_block(unit_choices_: list, j: int, weights: np.ndarray, m_units: int) -> np.ndarray:
    """Contribution of each choice of unit j (0-based) to a linear score."""
    base = 6 * j
    bridge = 6 * m_units + 2 * (j - 1)
    out = np.empty(len(unit_choices_))
    for i, c in enumerate(unit_choices_):
        d = c.depth
        e_total = float(sum(c.expansions[:d]))
        k_avg = sum(c.kernels[:d]) / d
        feats = (float(d), e_total / d, k_avg, e_total, e_total * d, k_avg * d)
        v = float(np.dot(weights[base: base + len(UNIT_FEATURES)], feats))
        if j > 0:
            v += weights[bridge] * c.expansions[0] + weights[bridge + 1] * c.kernels[0]
        out[i] = v
    return out


def brute_force_search(bank: PredictorBank, spec: SearchSpaceSpec, latency_limit: float,
                       image_size: int, cap: int = 10**6) -> OracleResult:
    """Predicted-accuracy argmax over every architecture with predicted latency < limit.

    Ties go to the first architecture in enumeration order.
    """
    count = cardinality(spec, image_sizes=False)
    if count > cap:
        raise EnumerationTooLarge(count, cap)
    bank.pair(image_size)  # raises NoPredictor for untrained sizes
    (a0, aw), (l0, lw) = bank._weights[image_size]
    per_unit = [list(unit_choices(u)) for u in spec.units]
    m = spec.num_units
    acc = np.array(a0)
    lat = np.array(l0)
    for j, choices in enumerate(per_unit):
        acc = np.add.outer(acc, _unit_block(choices, j, aw, m))
        lat = np.add.outer(lat, _unit_block(choices, j, lw, m))
    acc = acc.ravel()
    lat = lat.ravel()
    feasible = lat < latency_limit
    n_feasible = int(feasible.sum())
    if n_feasible == 0:
        return OracleResult(None, float("nan"), float(lat.min()), count, 0)
    best = int(np.argmax(np.where(feasible, acc, -np.inf)))
    idx = np.unravel_index(best, [len(c) for c in per_unit])
    arch = Architecture(image_size, tuple(per_unit[j][i] for j, i in enumerate(idx)))
    a, b = bank.predict_fast(arch)
    return OracleResult(arch, a, b, count, n_feasible)
