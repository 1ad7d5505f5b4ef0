"""Latency-constrained simulated annealing over architectures.

The temperature doubles as the number of slots changed per proposal
(``ceil(T)``). Two weightings steer which slots change: an early, predictor
guided one and a late, uniform one, swapped after ``phase_switch_count``
iterations. The search always keeps the image size fixed.

Acceptance uses the Metropolis rule: a worse candidate (delta <= 0) is
accepted with probability exp(delta / (k T)). The inverted form
``r > exp(-delta / kT)`` can never accept a worse candidate; it is kept
behind ``literal_acceptance`` for ablations only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._files import write_csv
from .predictor_bank import PredictorBank, guidance_weights
from .search_space import Architecture, ParamWeights, SearchSpaceSpec, mutate, sample_uniform


class InfeasibleConstraint(RuntimeError):
    def __init__(self, message: str, best_latency: float):
        super().__init__(f"{message} (best latency seen {best_latency:.6g} ms)")
        self.best_latency = best_latency


@dataclass(frozen=True)
class AnnealConfig:
    initial_temperature: float = 8.0
    boltzmann: float = 1.0
    rejections_per_cool: int = 100
    cooling_factor: float = 0.9
    min_temperature: float = 0.01
    max_feasibility_resamples: int = 10_000
    phase_switch_count: int | None = None  # None means 2 * rejections_per_cool
    max_evaluations: int | None = None
    seed: int = 0
    literal_acceptance: bool = False

    def __post_init__(self):
        if not self.initial_temperature > self.min_temperature > 0:
            raise ValueError("need initial_temperature > min_temperature > 0")
        if not 0 < self.cooling_factor < 1:
            raise ValueError("cooling_factor must lie in (0, 1)")
        if self.boltzmann <= 0:
            raise ValueError("boltzmann constant must be positive")
        if self.rejections_per_cool < 1 or self.max_feasibility_resamples < 1:
            raise ValueError("rejections_per_cool and max_feasibility_resamples must be >= 1")
        if self.phase_switch_count is not None and self.phase_switch_count < 1:
            raise ValueError("phase_switch_count must be >= 1")
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")

    @property
    def switch_at(self) -> int:
        if self.phase_switch_count is None:
            return 2 * self.rejections_per_cool
        return self.phase_switch_count


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    evaluations: int
    candidate: str
    accuracy: float
    latency: float
    temperature: float
    accepted: bool
    phase: int


@dataclass
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def evaluations(self) -> int:
        return self.entries[-1].evaluations if self.entries else 0

    def best_entry(self) -> TraceEntry:
        return max(self.entries, key=lambda e: e.accuracy)

    def evaluations_to_reach(self, accuracy: float, tol: float = 1e-9) -> int | None:
        """Evaluation count at which a candidate first scored within ``tol`` of ``accuracy``."""
        for e in self.entries:
            if e.accuracy >= accuracy - tol:
                return e.evaluations
        return None

    def write_csv(self, path: str | Path) -> None:
        write_csv(path, ["iteration", "evaluations", "candidate", "accuracy", "latency",
                         "temperature", "accepted", "phase"],
                  ([e.iteration, e.evaluations, e.candidate, repr(e.accuracy), repr(e.latency),
                    repr(e.temperature), int(e.accepted), e.phase] for e in self.entries))


@dataclass(frozen=True)
class SearchResult:
    architecture: Architecture
    accuracy: float
    latency: float
    trace: SearchTrace

    def __iter__(self):
        # unpacks as (architecture, trace)
        return iter((self.architecture, self.trace))


def acceptance(delta: float, k: float, T: float, r: float, literal: bool = False) -> bool:
    """Metropolis acceptance with the uniform draw ``r``."""
    if T <= 0 or k <= 0:
        raise ValueError("temperature and boltzmann constant must be positive")
    if delta > 0:
        return True
    if literal:
        return r > math.exp(-delta / (k * T))
    return r < math.exp(delta / (k * T))


def cool(T: float, config: AnnealConfig) -> float:
    if T <= 0:
        raise ValueError("temperature must be positive")
    return config.cooling_factor * T


def cooling_steps(config: AnnealConfig) -> int:
    """Number of coolings from the initial temperature until it drops below the minimum."""
    steps, T = 0, config.initial_temperature
    while T >= config.min_temperature:
        T = cool(T, config)
        steps += 1
    return steps


def mutation_count(T: float, spec: SearchSpaceSpec) -> int:
    return min(max(math.ceil(T), 1), spec.num_slots)


class _Evaluator:
    """Counts predictor-pair evaluations against an optional budget."""

    def __init__(self, bank: PredictorBank, budget: int | None):
        self.bank = bank
        self.budget = budget
        self.count = 0

    @property
    def exhausted(self) -> bool:
        return self.budget is not None and self.count >= self.budget

    def __call__(self, arch: Architecture) -> tuple[float, float]:
        self.count += 1
        return self.bank.predict_fast(arch)


class _BudgetSpent(Exception):
    pass


def _sample_model(evaluate, spec, L, T, weights, current, rng, max_tries):
    count = mutation_count(T, spec)
    best_lat = math.inf
    for _ in range(max_tries):
        if evaluate.exhausted:
            raise _BudgetSpent
        cand = mutate(current, spec, count, weights, rng)
        acc, lat = evaluate(cand)
        if lat < L:
            return cand, acc, lat
        best_lat = min(best_lat, lat)
    raise InfeasibleConstraint("latency constraint infeasible at this temperature", best_lat)


def sample_model(bank: PredictorBank, spec: SearchSpaceSpec, L: float, T: float,
                 weights: ParamWeights, current: Architecture, rng: np.random.Generator,
                 max_tries: int = 10_000) -> tuple[Architecture, float, float]:
    """Mutate ``current`` until the predicted latency is below ``L``; return the first hit.

    Raises InfeasibleConstraint after ``max_tries`` misses.
    """
    if L <= 0:
        raise ValueError("latency limit must be positive")
    return _sample_model(_Evaluator(bank, None), spec, L, T, weights, current, rng, max_tries)


def _pin_image_size(weights: ParamWeights, spec: SearchSpaceSpec) -> ParamWeights:
    if len(spec.image_sizes) == 1:
        return weights  # the slot cannot move anyway
    return weights.masked(spec, ["image_size"])


def _frozen(weights: ParamWeights, spec: SearchSpaceSpec) -> bool:
    """True when no selectable slot has an alternative value."""
    return all(w == 0 or len(c) < 2 for w, c in zip(weights.weights, spec.slot_candidates))


def search(bank: PredictorBank, spec: SearchSpaceSpec, L: float, config: AnnealConfig,
           image_size: int, weights: tuple[ParamWeights, ParamWeights] | None = None,
           rng: np.random.Generator | None = None) -> SearchResult:
    """Find the highest predicted-accuracy architecture with predicted latency below ``L``.

    ``weights`` is the (early, late) slot weighting; by default it comes from
    ``guidance_weights``. Stops when the temperature falls below
    ``min_temperature`` or the evaluation budget is spent, and returns the
    best feasible candidate seen along with the full trace.
    """
    if L <= 0:
        raise ValueError("latency limit must be positive")
    bank.pair(image_size)
    if weights is None:
        weights = guidance_weights(bank, spec, image_size)
    phases = tuple(_pin_image_size(w, spec) for w in weights)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    evaluate = _Evaluator(bank, config.max_evaluations)
    trace = SearchTrace()
    T = config.initial_temperature

    best_lat = math.inf
    current = None
    for _ in range(config.max_feasibility_resamples):
        if evaluate.exhausted:
            break
        cand = sample_uniform(spec, rng).with_image_size(image_size)
        acc, lat = evaluate(cand)
        if lat < L:
            current = (cand, acc, lat)
            break
        best_lat = min(best_lat, lat)
    if current is None:
        raise InfeasibleConstraint("latency constraint infeasible: no feasible initial architecture", best_lat)
    trace.entries.append(TraceEntry(0, evaluate.count, current[0].key(), current[1], current[2],
                                    T, True, 1))
    best = current
    if all(_frozen(w, spec) for w in phases):
        return SearchResult(best[0], best[1], best[2], trace)

    C = 0
    phase = 1
    n = config.rejections_per_cool
    while T >= config.min_temperature and not evaluate.exhausted:
        C += 1
        r = float(rng.random())
        try:
            try:
                new = _sample_model(evaluate, spec, L, T, phases[phase - 1], current[0], rng,
                                    config.max_feasibility_resamples)
            except InfeasibleConstraint:
                T = cool(T, config)
                if T < config.min_temperature:
                    break
                new = _sample_model(evaluate, spec, L, T, phases[phase - 1], current[0], rng,
                                    config.max_feasibility_resamples)
        except _BudgetSpent:
            break
        accepted = acceptance(new[1] - current[1], config.boltzmann, T, r,
                              literal=config.literal_acceptance)
        trace.entries.append(TraceEntry(C, evaluate.count, new[0].key(), new[1], new[2], T,
                                        accepted, phase))
        if new[1] > best[1]:
            best = new
        if accepted:
            current = new
        elif C % n == 0:
            T = cool(T, config)
        if C == config.switch_at:
            phase = 2
    return SearchResult(best[0], best[1], best[2], trace)


def search_all_sizes(bank: PredictorBank, spec: SearchSpaceSpec, L: float, config: AnnealConfig,
                     **guidance) -> tuple[SearchResult, dict[int, SearchResult | None]]:
    """Run one search per trained image size and keep the best feasible result.

    Extra keyword arguments go to ``guidance_weights``.
    """
    results: dict[int, SearchResult | None] = {}
    for size in bank.trained_sizes:
        try:
            weights = guidance_weights(bank, spec, size, **guidance)
            results[size] = search(bank, spec, L, config, size, weights=weights)
        except InfeasibleConstraint:
            results[size] = None
    feasible = [r for r in results.values() if r is not None]
    if not feasible:
        raise InfeasibleConstraint("no image size admits a feasible architecture", math.inf)
    return max(feasible, key=lambda r: r.accuracy), results
