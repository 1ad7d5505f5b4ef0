import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foxnas.features import (
    InvalidArchitecture, feature_matrix, feature_names, featurize, identifiable_features,
    num_features, slot_features,
)
from foxnas.search_space import (
    Architecture, SearchSpaceSpec, UnitChoice, UnitSpec, cpu_preset, sample_uniform, tpu_preset,
)


def one_unit(kernels=(3, 5, 7), exps=(2, 3, 4, 6), depths=(2, 3, 4)):
    return SearchSpaceSpec("u", (224,), (UnitSpec(kernels, exps, depths),))


def reference_features(arch):
    # straightforward restatement used as an oracle for the fast path
    out = []
    for u in arch.units:
        d = u.depth
        ks, es = u.kernels[:d], u.expansions[:d]
        e_tot = sum(es)
        out += [d, e_tot / d, sum(ks) / d, e_tot, e_tot * d, sum(ks) / d * d]
    for u in arch.units[1:]:
        out += [u.expansions[0], u.kernels[0]]
    return out


def test_uniform_unit_features():
    spec = one_unit()
    arch = Architecture(224, (UnitChoice(3, (3, 3, 3, 3), (4, 4, 4, 4)),))
    assert featurize(arch, spec).tolist() == [3, 4, 3, 12, 36, 9]


def test_partial_depth_ignores_inactive_layers():
    spec = one_unit()
    arch = Architecture(224, (UnitChoice(2, (3, 7, 5, 5), (2, 6, 3, 3)),))
    D, e_avg, k_avg, e_tot, etd, kad = featurize(arch, spec)
    assert (D, e_avg, k_avg, e_tot) == (2, 4, 5, 8)
    assert etd == 16 and kad == 10


def test_inactive_slot_does_not_change_features():
    spec = one_unit()
    a = Architecture(224, (UnitChoice(2, (3, 7, 5, 5), (2, 6, 3, 3)),))
    b = Architecture(224, (UnitChoice(2, (3, 7, 7, 3), (2, 6, 6, 2)),))
    assert np.array_equal(featurize(a, spec), featurize(b, spec))


def test_names_cpu():
    names = feature_names(cpu_preset())
    assert len(names) == 38 == num_features(5)
    assert names[0] == "D_1" and names[-1] == "K_4,5"
    assert names[:6] == ["D_1", "E^avg_1", "K^avg_1", "E^total_1", "E^total*D_1", "K^avg*D_1"]
    assert names[30:34] == ["E_1,2", "K_1,2", "E_2,3", "K_2,3"]


def test_names_small():
    assert len(feature_names(one_unit())) == 6
    assert not any("," in n for n in feature_names(one_unit()))
    two = SearchSpaceSpec("two", (224,), (UnitSpec((3,), (2,), (1,)), UnitSpec((3,), (2,), (1,))))
    names = feature_names(two)
    assert len(names) == 14 and "E_1,2" in names and "K_1,2" in names


def test_invalid_arch_rejected():
    spec = tpu_preset()
    arch = sample_uniform(cpu_preset(), np.random.default_rng(0))
    with pytest.raises(InvalidArchitecture):
        featurize(arch, spec)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_fast_path_matches_reference(seed):
    spec = cpu_preset()
    arch = sample_uniform(spec, np.random.default_rng(seed))
    assert featurize(arch, spec).tolist() == pytest.approx(reference_features(arch), abs=1e-12)


def test_feature_matrix_shape():
    spec = cpu_preset()
    rng = np.random.default_rng(1)
    X = feature_matrix([sample_uniform(spec, rng) for _ in range(5)], spec)
    assert X.shape == (5, 38)


def test_slot_feature_map_covers_every_feature():
    spec = cpu_preset()
    mapping = slot_features(spec)
    assert mapping["image_size"] == ()
    assert set(mapping["u2_depth"]) == {"D_2", "E^total*D_2", "K^avg*D_2"}
    assert mapping["u2_l1_k"] == ("K^avg_2", "K_1,2")
    assert mapping["u1_l1_k"] == ("K^avg_1",)
    assert "E_1,2" in mapping["u2_l1_e"] and "E_1,2" not in mapping["u2_l2_e"]
    covered = {f for feats in mapping.values() for f in feats}
    assert covered == set(feature_names(spec))


def test_identifiable_features():
    assert len(identifiable_features(cpu_preset())) == 38
    names = feature_names(tpu_preset())
    kept = [names[i] for i in identifiable_features(tpu_preset())]
    # a single kernel candidate makes every kernel feature an affine function of depth
    assert len(kept) == 24
    assert not any(n.startswith("K") for n in kept)
