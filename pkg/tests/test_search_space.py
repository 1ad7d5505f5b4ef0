import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foxnas.search_space import (
    Architecture, EnumerationTooLarge, ParamWeights, SearchSpaceSpec, UnitChoice, UnitSpec,
    cardinality, cpu_preset, enumerate_space, is_valid, load_spec, mutate, sample_uniform,
    save_spec, tpu_preset, unit_cardinality, validate,
)


def minimal_arch(spec):
    units = tuple(UnitChoice(u.depths[0], (u.kernels[0],) * u.max_depth,
                             (u.expansions[0],) * u.max_depth) for u in spec.units)
    return Architecture(spec.image_sizes[0], units)


def tiny_spec():
    return SearchSpaceSpec("tiny", (224,), (UnitSpec((3,), (2, 3), (1, 2)),))


def test_cpu_preset_layout():
    spec = cpu_preset()
    assert spec.num_slots == 46
    assert spec.slot_names[:4] == ("image_size", "u1_depth", "u1_l1_k", "u1_l1_e")
    assert len(spec.image_sizes) == 7


def test_validate_minimal_cpu_arch():
    assert validate(minimal_arch(cpu_preset()), cpu_preset()) == []


def test_validate_tpu_rejects_kernel_5():
    spec = tpu_preset()
    values = list(minimal_arch(spec).slots())
    values[spec.slot_index("u2_l1_k")] = 5
    problems = validate(Architecture.from_slots(spec, values), spec)
    assert len(problems) == 1
    assert "kernel 5 ∉ {3}" in problems[0]


def test_validate_cpu_rejects_depth_1():
    spec = cpu_preset()
    values = list(minimal_arch(spec).slots())
    values[spec.slot_index("u1_depth")] = 1
    problems = validate(Architecture.from_slots(spec, values), spec)
    assert any("depth 1 ∉ {2,3,4}" in p for p in problems)


def test_validate_reports_every_violation():
    spec = cpu_preset()
    values = list(minimal_arch(spec).slots())
    values[0] = 100
    values[spec.slot_index("u3_l2_e")] = 5
    assert len(validate(Architecture.from_slots(spec, values), spec)) == 2


def test_even_kernel_rejected_in_spec():
    with pytest.raises(ValueError):
        UnitSpec((3, 4), (2,), (1,))


def test_sample_uniform_deterministic():
    spec = cpu_preset()
    a = sample_uniform(spec, np.random.default_rng(5))
    b = sample_uniform(spec, np.random.default_rng(5))
    assert a == b and is_valid(a, spec)


def test_sample_singleton_space():
    spec = SearchSpaceSpec("one", (160,), (UnitSpec((3,), (4,), (2,)),))
    arch = sample_uniform(spec, np.random.default_rng(0))
    assert arch.slots() == (160, 2, 3, 4, 3, 4)


def test_kernel_frequencies_uniform():
    spec = cpu_preset()
    rng = np.random.default_rng(11)
    counts = {3: 0, 5: 0, 7: 0}
    total = 0
    for _ in range(10_000):
        arch = sample_uniform(spec, rng)
        for u in arch.units:
            for k in u.active_kernels:
                counts[k] += 1
                total += 1
    sigma = math.sqrt(total * (1 / 3) * (2 / 3))
    for c in counts.values():
        assert abs(c - total / 3) < 3 * sigma


def test_mutate_singletons_is_identity():
    spec = SearchSpaceSpec("one", (160,), (UnitSpec((3,), (4,), (2,)),))
    arch = sample_uniform(spec, np.random.default_rng(0))
    out = mutate(arch, spec, spec.num_slots, ParamWeights.uniform(spec), np.random.default_rng(1))
    assert out == arch


def test_mutate_forced_single_slot():
    spec = cpu_preset()
    base = sample_uniform(spec, np.random.default_rng(2))
    w = ParamWeights.only(spec, ["u3_l2_e"])
    for seed in range(20):
        out = mutate(base, spec, 1, w, np.random.default_rng(seed))
        diff = [n for n, a, b in zip(spec.slot_names, base.slots(), out.slots()) if a != b]
        assert diff == ["u3_l2_e"]


def test_mutate_uniform_count_3():
    spec = cpu_preset()
    w = ParamWeights.uniform(spec)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        base = sample_uniform(spec, rng)
        out = mutate(base, spec, 3, w, rng)
        ndiff = sum(a != b for a, b in zip(base.slots(), out.slots()))
        assert 1 <= ndiff <= 3
        assert is_valid(out, spec)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), count=st.integers(1, 46))
def test_mutate_property(seed, count):
    spec = cpu_preset()
    rng = np.random.default_rng(seed)
    base = sample_uniform(spec, rng)
    out = mutate(base, spec, count, ParamWeights.uniform(spec), rng)
    ndiff = sum(a != b for a, b in zip(base.slots(), out.slots()))
    # exclusion of the current value means every chosen slot with alternatives moves
    assert ndiff == count
    for v, cands in zip(out.slots(), spec.slot_candidates):
        assert v in cands


def test_weights_validation():
    spec = tiny_spec()
    with pytest.raises(ValueError):
        ParamWeights((0.0,) * spec.num_slots)
    with pytest.raises(ValueError):
        ParamWeights((1.0, -1.0) + (1.0,) * (spec.num_slots - 2))


def test_cardinality_trivial():
    spec = SearchSpaceSpec("one", (224,), (UnitSpec((3,), (2,), (1,)),))
    assert cardinality(spec) == 1


def test_cardinality_presets():
    cpu_unit = sum(12 ** d for d in (2, 3, 4))
    assert cpu_unit == 22608
    assert unit_cardinality(cpu_preset().units[0]) == 22608
    assert cardinality(cpu_preset()) == 7 * 22608 ** 5
    assert cardinality(cpu_preset()) == pytest.approx(4.13e22, rel=1e-2)
    assert cardinality(tpu_preset()) == 7 * 351 ** 5
    assert cardinality(tpu_preset()) == pytest.approx(3.7e13, rel=1e-2)


def test_enumerate_six():
    spec = tiny_spec()
    archs = list(enumerate_space(spec))
    assert len(archs) == 6 == cardinality(spec)
    assert len({a.canonical(spec).key() for a in archs}) == 6
    assert all(is_valid(a, spec) for a in archs)


def test_enumerate_singleton():
    spec = SearchSpaceSpec("one", (224,), (UnitSpec((3,), (2,), (1,)),))
    assert len(list(enumerate_space(spec))) == 1


def test_enumerate_cap_refuses_before_yielding():
    with pytest.raises(EnumerationTooLarge) as info:
        next(iter(enumerate_space(cpu_preset(), cap=10**6)))
    assert info.value.count == cardinality(cpu_preset())


@settings(max_examples=25, deadline=None)
@given(depths=st.sets(st.integers(1, 3), min_size=1),
       kernels=st.sets(st.sampled_from([1, 3, 5]), min_size=1),
       exps=st.sets(st.integers(1, 4), min_size=1, max_size=2))
def test_enumeration_matches_cardinality(depths, kernels, exps):
    spec = SearchSpaceSpec("h", (128, 160), (UnitSpec(tuple(kernels), tuple(exps), tuple(depths)),))
    archs = list(enumerate_space(spec))
    assert len(archs) == cardinality(spec)
    assert len({a.key() for a in archs}) == len(archs)


def test_key_roundtrip():
    spec = cpu_preset()
    arch = sample_uniform(spec, np.random.default_rng(3))
    assert Architecture.from_key(spec, arch.key()) == arch


def test_spec_json_roundtrip(tmp_path):
    spec = tpu_preset()
    path = tmp_path / "tpu.json"
    save_spec(spec, path)
    loaded = load_spec(str(path))
    assert loaded == spec
    assert loaded.fingerprint() == spec.fingerprint()
    assert json.loads(path.read_text())["name"] == "tpu"


def test_load_spec_by_name():
    assert load_spec("cpu") == cpu_preset()
    with pytest.raises(ValueError):
        load_spec("gpu")
