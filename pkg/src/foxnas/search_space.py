"""Discrete architecture space: specs, architectures, sampling, mutation, counting.

An architecture is stored in its raw slot encoding: one image-size slot, then
for every unit a depth slot followed by ``max_depth`` (kernel, expansion)
layer slots. Layers at positions ``>= depth`` are inactive but still carry
in-domain values so that mutation treats every slot alike.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

PRESET_IMAGE_SIZES = (128, 160, 192, 224, 256, 288, 320)


class UnitType(enum.IntEnum):
    TYPE1 = 1
    TYPE2 = 2
    TYPE3 = 3


class EnumerationTooLarge(ValueError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"enumeration too large: {count} architectures exceeds cap {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class UnitSpec:
    kernels: tuple[int, ...]
    expansions: tuple[int, ...]
    depths: tuple[int, ...]
    unit_type: UnitType = UnitType.TYPE1

    def __post_init__(self):
        for label, values in (("kernels", self.kernels), ("expansions", self.expansions),
                              ("depths", self.depths)):
            if not values:
                raise ValueError(f"{label} candidates must be non-empty")
            if any(int(v) != v or v <= 0 for v in values):
                raise ValueError(f"{label} candidates must be positive integers: {values}")
            object.__setattr__(self, label, tuple(sorted({int(v) for v in values})))
        if any(k % 2 == 0 for k in self.kernels):
            raise ValueError(f"kernel candidates must be odd: {self.kernels}")
        object.__setattr__(self, "unit_type", UnitType(self.unit_type))

    @property
    def max_depth(self) -> int:
        return self.depths[-1]


@dataclass(frozen=True)
class SearchSpaceSpec:
    name: str
    image_sizes: tuple[int, ...]
    units: tuple[UnitSpec, ...]
    _slot_names: tuple[str, ...] = field(init=False, repr=False, compare=False)
    _slot_candidates: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.image_sizes)
        if not sizes:
            raise ValueError("image_sizes must be non-empty")
        if any(s <= 0 for s in sizes) or any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"image_sizes must be positive and strictly increasing: {sizes}")
        if not self.units:
            raise ValueError("a search space needs at least one unit")
        object.__setattr__(self, "image_sizes", sizes)
        object.__setattr__(self, "units", tuple(self.units))

        names = ["image_size"]
        cands: list[tuple[int, ...]] = [sizes]
        for j, unit in enumerate(self.units, start=1):
            names.append(f"u{j}_depth")
            cands.append(unit.depths)
            for layer in range(1, unit.max_depth + 1):
                names += [f"u{j}_l{layer}_k", f"u{j}_l{layer}_e"]
                cands += [unit.kernels, unit.expansions]
        object.__setattr__(self, "_slot_names", tuple(names))
        object.__setattr__(self, "_slot_candidates", tuple(cands))

    @property
    def num_units(self) -> int:
        return len(self.units)

    @property
    def slot_names(self) -> tuple[str, ...]:
        return self._slot_names

    @property
    def slot_candidates(self) -> tuple[tuple[int, ...], ...]:
        return self._slot_candidates

    @property
    def num_slots(self) -> int:
        return len(self._slot_names)

    def slot_index(self, name: str) -> int:
        return self._slot_names.index(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "image_sizes": list(self.image_sizes),
            "units": [
                {
                    "kernels": list(u.kernels),
                    "expansions": list(u.expansions),
                    "depths": list(u.depths),
                    "unit_type": int(u.unit_type),
                }
                for u in self.units
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchSpaceSpec":
        try:
            units = tuple(
                UnitSpec(
                    kernels=tuple(u["kernels"]),
                    expansions=tuple(u["expansions"]),
                    depths=tuple(u["depths"]),
                    unit_type=UnitType(u.get("unit_type", 1)),
                )
                for u in data["units"]
            )
            return cls(name=str(data.get("name", "custom")),
                       image_sizes=tuple(data["image_sizes"]), units=units)
        except KeyError as exc:
            raise ValueError(f"search-space config is missing field {exc.args[0]!r}") from None

    def fingerprint(self) -> str:
        """Hash of the candidate sets; names are excluded so renaming keeps banks valid."""
        payload = self.to_dict()
        payload.pop("name")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def cpu_preset(image_sizes: Sequence[int] = PRESET_IMAGE_SIZES) -> SearchSpaceSpec:
    # units alternate the two CPU unit types; types are metadata only
    units = tuple(
        UnitSpec(kernels=(3, 5, 7), expansions=(2, 3, 4, 6), depths=(2, 3, 4),
                 unit_type=UnitType.TYPE1 if j < 2 else UnitType.TYPE2)
        for j in range(5)
    )
    return SearchSpaceSpec("cpu", tuple(image_sizes), units)


def tpu_preset(image_sizes: Sequence[int] = PRESET_IMAGE_SIZES) -> SearchSpaceSpec:
    units = tuple(
        UnitSpec(kernels=(3,), expansions=(4, 6, 8), depths=(3, 4, 5),
                 unit_type=UnitType.TYPE3 if j < 2 else UnitType.TYPE2)
        for j in range(5)
    )
    return SearchSpaceSpec("tpu", tuple(image_sizes), units)


PRESETS = {"cpu": cpu_preset, "tpu": tpu_preset}


def load_spec(source: str | Path) -> SearchSpaceSpec:
    """Resolve a preset name ("cpu", "tpu") or read a JSON search-space config."""
    if str(source) in PRESETS:
        return PRESETS[str(source)]()
    path = Path(source)
    if not path.exists():
        raise ValueError(f"unknown preset or missing config file: {source}")
    return SearchSpaceSpec.from_dict(json.loads(path.read_text()))


def save_spec(spec: SearchSpaceSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class UnitChoice:
    depth: int
    kernels: tuple[int, ...]
    expansions: tuple[int, ...]

    @property
    def active_kernels(self) -> tuple[int, ...]:
        return self.kernels[: self.depth]

    @property
    def active_expansions(self) -> tuple[int, ...]:
        return self.expansions[: self.depth]


@dataclass(frozen=True)
class Architecture:
    image_size: int
    units: tuple[UnitChoice, ...]

    def slots(self) -> tuple[int, ...]:
        values = [self.image_size]
        for unit in self.units:
            values.append(unit.depth)
            for k, e in zip(unit.kernels, unit.expansions):
                values += [k, e]
        return tuple(values)

    @classmethod
    def from_slots(cls, spec: SearchSpaceSpec, values: Sequence[int]) -> "Architecture":
        if len(values) != spec.num_slots:
            raise ValueError(f"expected {spec.num_slots} slot values, got {len(values)}")
        pos = 1
        units = []
        for unit in spec.units:
            depth = int(values[pos])
            layers = values[pos + 1: pos + 1 + 2 * unit.max_depth]
            units.append(UnitChoice(depth, tuple(int(v) for v in layers[0::2]),
                                    tuple(int(v) for v in layers[1::2])))
            pos += 1 + 2 * unit.max_depth
        return cls(int(values[0]), tuple(units))

    def key(self) -> str:
        """Compact identifier: slot values joined by '-'."""
        return "-".join(str(v) for v in self.slots())

    @classmethod
    def from_key(cls, spec: SearchSpaceSpec, key: str) -> "Architecture":
        return cls.from_slots(spec, [int(v) for v in key.replace(",", "-").split("-")])

    def with_image_size(self, image_size: int) -> "Architecture":
        return Architecture(image_size, self.units)

    def canonical(self, spec: SearchSpaceSpec) -> "Architecture":
        """Inactive layers reset to the smallest candidate values."""
        units = []
        for choice, unit in zip(self.units, spec.units):
            pad = unit.max_depth - choice.depth
            units.append(UnitChoice(
                choice.depth,
                choice.active_kernels + (unit.kernels[0],) * pad,
                choice.active_expansions + (unit.expansions[0],) * pad,
            ))
        return Architecture(self.image_size, tuple(units))


@dataclass(frozen=True)
class ParamWeights:
    """Per-slot selection weights, aligned with ``spec.slot_names``."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w or any(not math.isfinite(x) or x < 0 for x in w):
            raise ValueError("weights must be finite and nonnegative")
        if not any(x > 0 for x in w):
            raise ValueError("at least one weight must be strictly positive")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, spec: SearchSpaceSpec) -> "ParamWeights":
        return cls((1.0,) * spec.num_slots)

    @classmethod
    def only(cls, spec: SearchSpaceSpec, names: Sequence[str]) -> "ParamWeights":
        chosen = set(names)
        return cls(tuple(1.0 if n in chosen else 0.0 for n in spec.slot_names))

    def masked(self, spec: SearchSpaceSpec, names: Sequence[str]) -> "ParamWeights":
        """Copy with the named slots pinned (weight 0)."""
        drop = set(names)
        return ParamWeights(tuple(0.0 if n in drop else w
                                  for n, w in zip(spec.slot_names, self.weights)))

    def as_dict(self, spec: SearchSpaceSpec) -> dict[str, float]:
        return dict(zip(spec.slot_names, self.weights))


def validate(arch: Architecture, spec: SearchSpaceSpec) -> list[str]:
    """Return the list of domain violations; an empty list means the architecture is valid."""
    problems = []
    if arch.image_size not in spec.image_sizes:
        problems.append(f"image_size: {arch.image_size} ∉ {_fmt(spec.image_sizes)}")
    if len(arch.units) != spec.num_units:
        problems.append(f"units: expected {spec.num_units}, got {len(arch.units)}")
        return problems
    for j, (choice, unit) in enumerate(zip(arch.units, spec.units), start=1):
        if choice.depth not in unit.depths:
            problems.append(f"u{j}_depth: depth {choice.depth} ∉ {_fmt(unit.depths)}")
        if len(choice.kernels) != unit.max_depth or len(choice.expansions) != unit.max_depth:
            problems.append(f"u{j}: layer lists must have length {unit.max_depth}")
            continue
        for layer, (k, e) in enumerate(zip(choice.kernels, choice.expansions), start=1):
            if k not in unit.kernels:
                problems.append(f"u{j}_l{layer}_k: kernel {k} ∉ {_fmt(unit.kernels)}")
            if e not in unit.expansions:
                problems.append(f"u{j}_l{layer}_e: expansion {e} ∉ {_fmt(unit.expansions)}")
    return problems


def is_valid(arch: Architecture, spec: SearchSpaceSpec) -> bool:
    return not validate(arch, spec)


def _fmt(values: Sequence[int]) -> str:
    return "{" + ",".join(str(v) for v in values) + "}"


def sample_uniform(spec: SearchSpaceSpec, rng: np.random.Generator) -> Architecture:
    cands = spec.slot_candidates
    idx = rng.integers(0, [len(c) for c in cands])
    return Architecture.from_slots(spec, [c[i] for c, i in zip(cands, idx.tolist())])


def mutate(arch: Architecture, spec: SearchSpaceSpec, count: int, weights: ParamWeights,
           rng: np.random.Generator) -> Architecture:
    """Resample ``count`` distinct slots chosen with probability proportional to ``weights``.

    ``count`` is clamped to the number of positive-weight slots. A chosen slot
    with two or more candidates always moves to a different value.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    w = weights.weights
    if len(w) != spec.num_slots:
        raise ValueError(f"weights cover {len(w)} slots, spec has {spec.num_slots}")
    positive = [i for i, x in enumerate(w) if x > 0]
    count = min(count, len(positive))
    if count == len(positive):
        chosen = positive
    else:
        # Efraimidis-Spirakis: the top-`count` keys log(u)/w form a weighted
        # sample without replacement
        u = rng.random(len(positive))
        keys = [math.log(float(ui)) / w[i] if ui > 0 else -math.inf for ui, i in zip(u, positive)]
        order = sorted(range(len(positive)), key=keys.__getitem__, reverse=True)
        chosen = [positive[j] for j in order[:count]]
    values = list(arch.slots())
    for idx in sorted(chosen):
        cands = spec.slot_candidates[idx]
        if len(cands) < 2:
            continue
        alternatives = [c for c in cands if c != values[idx]]
        values[idx] = alternatives[int(rng.integers(len(alternatives)))]
    return Architecture.from_slots(spec, values)


def unit_cardinality(unit: UnitSpec) -> int:
    per_layer = len(unit.kernels) * len(unit.expansions)
    return sum(per_layer ** d for d in unit.depths)


def cardinality(spec: SearchSpaceSpec, image_sizes: bool = True) -> int:
    """Exact number of distinct architectures (inactive layers do not count)."""
    total = len(spec.image_sizes) if image_sizes else 1
    for unit in spec.units:
        total *= unit_cardinality(unit)
    return total


def unit_choices(unit: UnitSpec) -> Iterator[UnitChoice]:
    for depth in unit.depths:
        pad = unit.max_depth - depth
        for layers in itertools.product(itertools.product(unit.kernels, unit.expansions),
                                        repeat=depth):
            ks = tuple(k for k, _ in layers) + (unit.kernels[0],) * pad
            es = tuple(e for _, e in layers) + (unit.expansions[0],) * pad
            yield UnitChoice(depth, ks, es)


def enumerate_space(spec: SearchSpaceSpec, cap: int = 10**6,
                    image_sizes: Sequence[int] | None = None) -> Iterator[Architecture]:
    """Yield every distinct canonical architecture once, in lexicographic unit order.

    Raises EnumerationTooLarge (before yielding anything) when the count exceeds ``cap``.
    """
    sizes = tuple(spec.image_sizes if image_sizes is None else image_sizes)
    count = len(sizes) * cardinality(spec, image_sizes=False)
    if count > cap:
        raise EnumerationTooLarge(count, cap)
    return _enumerate(spec, sizes)


def _enumerate(spec, sizes):
    per_unit = [list(unit_choices(u)) for u in spec.units]
    for size in sizes:
        for units in itertools.product(*per_unit):
            yield Architecture(size, units)
