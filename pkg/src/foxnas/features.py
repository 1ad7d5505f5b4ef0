"""Engineered regression features for an architecture.

Per unit j (in this order): D_j, E^avg_j, K^avg_j, E^total_j, E^total_j*D_j,
K^avg_j*D_j. After all units, one pair per adjacent unit boundary:
E_j,j+1 and K_j,j+1, taken from the first layer of unit j+1 where the channel
count changes. Image size is not a feature; it selects the predictor.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._files import write_csv
from .search_space import (Architecture, SearchSpaceSpec, cardinality, enumerate_space,
                           sample_uniform, validate)

UNIT_FEATURES = ("D", "E^avg", "K^avg", "E^total", "E^total*D", "K^avg*D")


class InvalidArchitecture(ValueError):
    pass


def feature_names(spec: SearchSpaceSpec) -> list[str]:
    return list(_names(spec.num_units))


@lru_cache(maxsize=None)
def _names(m: int) -> tuple[str, ...]:
    names = [f"{f}_{j}" for j in range(1, m + 1) for f in UNIT_FEATURES]
    for j in range(1, m):
        names += [f"E_{j},{j + 1}", f"K_{j},{j + 1}"]
    return tuple(names)


def num_features(m: int) -> int:
    return 6 * m + 2 * (m - 1)


def featurize_unchecked(arch: Architecture) -> list[float]:
    """Feature values without domain validation (hot path for search)."""
    values: list[float] = []
    for unit in arch.units:
        d = unit.depth
        e_total = float(sum(unit.expansions[:d]))
        k_avg = sum(unit.kernels[:d]) / d
        values += [float(d), e_total / d, k_avg, e_total, e_total * d, k_avg * d]
    for unit in arch.units[1:]:
        values += [float(unit.expansions[0]), float(unit.kernels[0])]
    return values


def featurize(arch: Architecture, spec: SearchSpaceSpec) -> np.ndarray:
    problems = validate(arch, spec)
    if problems:
        raise InvalidArchitecture("; ".join(problems))
    return np.array(featurize_unchecked(arch))


def feature_matrix(archs: Iterable[Architecture], spec: SearchSpaceSpec) -> np.ndarray:
    rows = []
    for arch in archs:
        problems = validate(arch, spec)
        if problems:
            raise InvalidArchitecture("; ".join(problems))
        rows.append(featurize_unchecked(arch))
    return np.array(rows, dtype=float).reshape(len(rows), num_features(spec.num_units))


@lru_cache(maxsize=None)
def _slot_feature_map(spec: SearchSpaceSpec) -> tuple[tuple[str, ...], ...]:
    out: list[tuple[str, ...]] = [()]
    for j, unit in enumerate(spec.units, start=1):
        out.append((f"D_{j}", f"E^total*D_{j}", f"K^avg*D_{j}"))
        for layer in range(1, unit.max_depth + 1):
            bridge = layer == 1 and j > 1
            k_feats = (f"K^avg_{j}",) + ((f"K_{j - 1},{j}",) if bridge else ())
            e_feats = (f"E^avg_{j}", f"E^total_{j}") + ((f"E_{j - 1},{j}",) if bridge else ())
            out += [k_feats, e_feats]
    return tuple(out)


def slot_features(spec: SearchSpaceSpec) -> dict[str, tuple[str, ...]]:
    """Features each slot primarily drives; the image-size slot drives none."""
    return dict(zip(spec.slot_names, _slot_feature_map(spec)))


def write_feature_csv(path: str | Path, archs: Sequence[Architecture], spec: SearchSpaceSpec,
                      targets: dict[str, Sequence[float]] | None = None) -> None:
    """Write the feature matrix with a feature_names header, plus optional target columns."""
    names = feature_names(spec)
    targets = targets or {}
    X = feature_matrix(archs, spec)
    write_csv(path, ["image_size", *names, *targets],
              ([arch.image_size, *(repr(float(v)) for v in row),
                *(repr(float(t[i])) for t in targets.values())]
               for i, (arch, row) in enumerate(zip(archs, X))))


_PROBE_SEED = 0
_RANK_TOL = 1e-9


@lru_cache(maxsize=None)
def identifiable_features(spec: SearchSpaceSpec) -> tuple[int, ...]:
    """Indices of features that are not structurally redundant for this space.

    A feature is dropped when, over the whole space, it is an affine function of
    earlier features (e.g. every K term when the kernel set is a singleton).
    Small spaces are enumerated; larger ones are probed with a fixed-seed sample.
    """
    m = num_features(spec.num_units)
    one_size = (spec.image_sizes[0],)
    if cardinality(spec, image_sizes=False) <= 4096:
        X = np.array([featurize_unchecked(a) for a in enumerate_space(spec, image_sizes=one_size)])
    else:
        rng = np.random.default_rng(_PROBE_SEED)
        X = np.array([featurize_unchecked(sample_uniform(spec, rng)) for _ in range(8 * m + 256)])
    X = X - X.mean(axis=0)
    kept: list[int] = []
    basis = np.empty((X.shape[0], 0))
    for j in range(m):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0.0:
            continue
        resid = col - basis @ (basis.T @ col)
        resid = resid - basis @ (basis.T @ resid)
        if np.linalg.norm(resid) > _RANK_TOL * norm * max(1.0, np.sqrt(X.shape[0])):
            basis = np.column_stack([basis, resid / np.linalg.norm(resid)])
            kept.append(j)
    return tuple(kept)
