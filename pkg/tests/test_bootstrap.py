import numpy as np
import pytest

from rotwin.bootstrap import bootstrap_ci
from rotwin.compare import Arm, Continuous, Dataset, Subject
from rotwin.errors import ConfigurationError
from rotwin.hierarchy import EndpointSpec, RotationSet, build_rotation_set
from rotwin.inference import RNB, RWO, RWR
from rotwin.rng import make_rng
from rotwin.simgen import CopulaScenario, simulate_arms


@pytest.fixture(scope="module")
def effect_data():
    sc = CopulaScenario(n_per_arm=100, alpha_nonfatal=(0.3, 0.2, 0.1))
    ds = simulate_arms(sc, make_rng(5, "boot-fixture"))
    return ds, build_rotation_set(sc.hierarchy())


def test_same_seed_same_intervals(effect_data):
    ds, rs = effect_data
    a = bootstrap_ci(ds, rs, B=200, seed=3)
    b = bootstrap_ci(ds, rs, B=200, seed=3)
    assert a.intervals == b.intervals
    c = bootstrap_ci(ds, rs, B=200, seed=4)
    assert c.intervals != a.intervals


def test_intervals_are_ordered(effect_data):
    ds, rs = effect_data
    r = bootstrap_ci(ds, rs, B=300, seed=1)
    for m in (RWR, RNB, RWO):
        lo, hi = r.intervals[m]
        assert lo < hi
    assert r.replicates == 300 and r.degenerate == 0


def test_few_vs_many_resamples(effect_data):
    ds, rs = effect_data
    few = bootstrap_ci(ds, rs, B=100, seed=8).intervals[RWR]
    many = bootstrap_ci(ds, rs, B=10_000, seed=8).intervals[RWR]
    assert abs(few[0] - many[0]) < 0.1 and abs(few[1] - many[1]) < 0.1


def test_single_stratum_matches_unstratified(effect_data):
    ds, rs = effect_data
    a = bootstrap_ci(ds, rs, B=150, seed=2)
    b = bootstrap_ci(ds, rs, B=150, seed=2, stratified=True)
    assert a.intervals == b.intervals


def test_too_few_resamples(effect_data):
    ds, rs = effect_data
    with pytest.raises(ConfigurationError, match="at least 100"):
        bootstrap_ci(ds, rs, B=50)


def test_degenerate_resamples_warn():
    spec = EndpointSpec("x", "continuous", "larger")
    subj = [Subject(f"t{i}", Arm.TREATMENT, (Continuous(10.0),)) for i in range(10)]
    subj += [Subject(f"c{i}", Arm.CONTROL, (Continuous(0.0),)) for i in range(9)]
    subj.append(Subject("c9", Arm.CONTROL, (Continuous(20.0),)))
    ds = Dataset.from_subjects(subj, (spec,))
    with pytest.warns(UserWarning, match="degenerate"):
        r = bootstrap_ci(ds, RotationSet.single((0,)), B=400, seed=0)
    assert r.degenerate > 40
    assert r.warnings


def test_stratified_resampling_keeps_strata_separate():
    # two strata where treated always wins in one and always loses in the other;
    # within-stratum resampling keeps both the win and the loss mass fixed
    spec = EndpointSpec("x", "continuous", "larger")
    subj = []
    for s, (tv, cv) in {"a": (5.0, 1.0), "b": (1.0, 5.0)}.items():
        subj += [Subject(f"{s}t{i}", Arm.TREATMENT, (Continuous(tv),), stratum=s) for i in range(4)]
        subj += [Subject(f"{s}c{i}", Arm.CONTROL, (Continuous(cv),), stratum=s) for i in range(4)]
    ds = Dataset.from_subjects(subj, (spec,))
    r = bootstrap_ci(ds, RotationSet.single((0,)), B=200, seed=0, stratified=True)
    assert r.intervals[RWR] == (1.0, 1.0)
    assert np.allclose(r.intervals[RNB], (0.0, 0.0))
