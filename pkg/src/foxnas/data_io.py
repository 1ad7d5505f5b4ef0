"""Measurement datasets, synthetic generation, and file persistence."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ._files import atomic_write, csv_text
from .oracle import PlantedModel, evaluate_true
from .predictor_bank import PredictorBank
from .search_space import Architecture, SearchSpaceSpec, sample_uniform, validate

log = logging.getLogger(__name__)

TARGET_COLUMNS = ("accuracy", "latency_ms")
MIN_LATENCY = 0.01


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    arch: Architecture
    accuracy: float
    latency_ms: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise DatasetError(f"accuracy {self.accuracy} outside [0, 100]")
        if not self.latency_ms > 0.0:
            raise DatasetError(f"latency {self.latency_ms} must be positive")


def dataset_columns(spec: SearchSpaceSpec) -> list[str]:
    return [*spec.slot_names, *TARGET_COLUMNS]


def dataset_to_csv(records: Iterable[DatasetRecord], spec: SearchSpaceSpec) -> str:
    return csv_text(dataset_columns(spec),
                    ([*rec.arch.slots(), repr(float(rec.accuracy)), repr(float(rec.latency_ms))]
                     for rec in records))


def save_dataset(path: str | Path, records: Iterable[DatasetRecord], spec: SearchSpaceSpec) -> None:
    atomic_write(path, dataset_to_csv(records, spec))


def load_dataset(path: str | Path, spec: SearchSpaceSpec) -> list[DatasetRecord]:
    """Parse and validate a dataset CSV; errors name the offending column or row."""
    expected = dataset_columns(spec)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file, expected header {','.join(expected)}")
        header = [h.strip() for h in header]
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"missing column(s) {', '.join(missing)}")
            if extra:
                parts.append(f"unexpected column(s) {', '.join(extra)}")
            raise DatasetError(f"{path}: schema mismatch: " + "; ".join(parts))
        order = [header.index(c) for c in expected]
        n_slots = spec.num_slots
        records = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {row_no}: expected {len(header)} fields, got {len(row)}")
            values = [row[i] for i in order]
            try:
                slots = [int(v) for v in values[:n_slots]]
                acc, lat = float(values[n_slots]), float(values[n_slots + 1])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {row_no}: {exc}") from None
            arch = Architecture.from_slots(spec, slots)
            problems = validate(arch, spec)
            if problems:
                raise DatasetError(f"{path}: row {row_no}: " + "; ".join(problems))
            try:
                records.append(DatasetRecord(arch, acc, lat))
            except DatasetError as exc:
                raise DatasetError(f"{path}: row {row_no}: {exc}") from None
    return records


def generate_synthetic(spec: SearchSpaceSpec, planted: PlantedModel, count_per_image_size: int,
                       rng: np.random.Generator) -> list[DatasetRecord]:
    """Uniformly sampled architectures labelled by the planted model plus Gaussian noise.

    Accuracy is clamped to [0, 100] and latency floored at 0.01 ms.
    """
    if count_per_image_size < 1:
        raise ValueError("count_per_image_size must be >= 1")
    records = []
    clamped = 0
    for size in spec.image_sizes:
        for _ in range(count_per_image_size):
            arch = sample_uniform(spec, rng).with_image_size(size)
            acc, lat = evaluate_true(planted, arch)
            if planted.noise_acc > 0:
                acc += planted.noise_acc * float(rng.standard_normal())
            if planted.noise_lat > 0:
                lat += planted.noise_lat * float(rng.standard_normal())
            acc_c = min(100.0, max(0.0, acc))
            lat_c = max(MIN_LATENCY, lat)
            clamped += (acc_c != acc) + (lat_c != lat)
            records.append(DatasetRecord(arch, acc_c, lat_c))
    if clamped:
        log.warning("clamped %d synthetic label(s) into the valid range", clamped)
    return records


def save_bank(path: str | Path, bank: PredictorBank) -> None:
    atomic_write(path, bank.to_json())


def load_bank(path: str | Path, spec: SearchSpaceSpec) -> PredictorBank:
    return PredictorBank.from_json(Path(path).read_text(), spec)
