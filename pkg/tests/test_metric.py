import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipext import (InstanceValidationError, ParameterError, ball_members,
                    instance_from_arrays, lip_constant, lipa_profile,
                    validate_instance)
from conftest import grid_instance, oracle_lip, random_instance


def _matrix_raw(d, subset=(0, 2), values=(0.0, 2.0), **extra):
    raw = {"points": {"type": "matrix", "d": d},
           "subset": list(subset), "values": list(values)}
    raw.update(extra)
    return raw


# --- validate_instance -------------------------------------------------------


def test_validate_three_point_matrix():
    inst = validate_instance(_matrix_raw([[0, 1, 2], [1, 0, 1], [2, 1, 0]]))
    assert inst.lipschitz_L == 1.0  # |2 - 0| / 2
    assert inst.lipschitz_computed == 1.0


def test_triangle_violation_reports_triple():
    with pytest.raises(InstanceValidationError) as exc:
        validate_instance(_matrix_raw([[0, 1, 5], [1, 0, 1], [5, 1, 0]]))
    err = exc.value
    assert "triangle" in err.reason
    assert {err.witness["i"], err.witness["j"], err.witness["k"]} == {0, 1, 2}


def test_user_lipschitz_below_computed_rejected():
    raw = _matrix_raw([[0, 1], [1, 0]], subset=(0, 1), values=(0.0, 1.0),
                      lipschitz=0.5)
    with pytest.raises(InstanceValidationError) as exc:
        validate_instance(raw)
    assert exc.value.field == "lipschitz"
    assert exc.value.witness["computed"] == 1.0


def test_user_lipschitz_at_or_above_computed_accepted():
    raw = _matrix_raw([[0, 1], [1, 0]], subset=(0, 1), values=(0.0, 1.0),
                      lipschitz=1.0)
    assert validate_instance(raw).lipschitz_L == 1.0


@pytest.mark.parametrize("d,reason", [
    ([[0, 1], [2, 0]], "asymmetric"),
    ([[0, -1], [-1, 0]], "negative"),
    ([[1, 1], [1, 0]], "diagonal"),
    ([[0, 0], [0, 0]], "off-diagonal"),
])
def test_matrix_axiom_failures(d, reason):
    with pytest.raises(InstanceValidationError) as exc:
        validate_instance(_matrix_raw(d, subset=(0,), values=(0.0,)))
    assert reason in exc.value.reason


def test_subset_and_values_errors():
    with pytest.raises(InstanceValidationError, match="out of range"):
        instance_from_arrays(coords=[[0.0], [1.0]], subset=[0, 5], values=[0, 1])
    with pytest.raises(InstanceValidationError, match="duplicate subset"):
        instance_from_arrays(coords=[[0.0], [1.0]], subset=[1, 1], values=[0, 1])
    with pytest.raises(InstanceValidationError, match="length"):
        instance_from_arrays(coords=[[0.0], [1.0]], subset=[0, 1], values=[0.0])
    with pytest.raises(InstanceValidationError, match="non-finite"):
        instance_from_arrays(coords=[[0.0], [1.0]], subset=[0, 1],
                             values=[0.0, np.nan])


def test_missing_fields_named():
    with pytest.raises(InstanceValidationError) as exc:
        validate_instance({"points": {"type": "matrix", "d": [[0]]}, "subset": [0]})
    assert exc.value.field == "values"
    with pytest.raises(InstanceValidationError) as exc:
        validate_instance({"subset": [0], "values": [0.0]})
    assert exc.value.field == "points"


def test_duplicate_euclidean_points_rejected():
    with pytest.raises(InstanceValidationError, match="duplicate points"):
        instance_from_arrays(coords=[[0.0, 0.0], [0.0, 0.0]], subset=[0],
                             values=[1.0])


# --- lip_constant ------------------------------------------------------------


def test_lip_constant_basics(line3):
    assert lip_constant(line3, np.array([0.0, 1.0]), [0, 2]) == 1.0
    assert lip_constant(line3, np.array([5.0, 5.0, 5.0]), [0, 1, 2]) == 0.0
    assert lip_constant(line3, np.array([7.0]), [1]) == 0.0
    # brute force over the 3 pairs: max(2, 1, 0) = 2
    assert lip_constant(line3, np.array([0.0, 1.0, 1.0]), [0, 1, 2]) == 2.0


def test_lip_constant_duplicate_members_rejected(line3):
    with pytest.raises(ParameterError):
        lip_constant(line3, np.array([0.0, 1.0]), [1, 1])


def test_lip_constant_relabeling_invariance():
    inst = random_instance(7, n_max=30)
    rng = np.random.default_rng(4)
    members = rng.choice(inst.n, size=10, replace=False)
    vals = rng.normal(size=10)
    perm = rng.permutation(10)
    assert lip_constant(inst, vals[perm], members[perm]) == \
        lip_constant(inst, vals, members)


def test_lip_constant_matches_oracle():
    inst = random_instance(3, n_max=40)
    rng = np.random.default_rng(0)
    members = rng.choice(inst.n, size=12, replace=False)
    vals = rng.normal(size=12)
    got = lip_constant(inst, vals, members)
    assert got == pytest.approx(oracle_lip(inst, vals, members), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_lip_constant_shift_invariance_and_monotone(seed, shift):
    inst = random_instance(seed % 17, n_max=30)
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, inst.n + 1))
    members = rng.choice(inst.n, size=m, replace=False)
    vals = rng.normal(size=m)
    full = lip_constant(inst, vals, members)
    assert lip_constant(inst, vals + shift, members) == pytest.approx(full, rel=1e-12)
    sub = rng.integers(0, 2, size=m).astype(bool)
    if sub.sum() >= 1:
        assert lip_constant(inst, vals[sub], members[sub]) <= full + 1e-12 * (1 + full)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 5))
def test_every_euclidean_cloud_validates(seed, n, dim):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-10, 10, (n, dim))
    inst = instance_from_arrays(coords=coords, subset=[0, n - 1],
                                values=[0.0, 1.0])
    assert inst.n == n


# --- ball_members ------------------------------------------------------------


def test_ball_members_line(line3):
    allpts = [0, 1, 2]
    assert ball_members(line3, 0, 0.6, allpts).tolist() == [0, 1]
    assert ball_members(line3, 0, 1e-9, allpts).tolist() == [0]
    assert ball_members(line3, 0, 99.0, allpts).tolist() == allpts
    assert ball_members(line3, 0, 0.5, allpts).tolist() == [0]  # open ball


# --- lipa_profile ------------------------------------------------------------


def test_lipa_profile_two_point_grid():
    inst = grid_instance(2)
    prof = lipa_profile(inst, inst.subset, inst.values, 0, [0.5, 2.0])
    # local constant vanishes at the subset point, global constant once both
    # endpoints enter the ball
    assert prof.constants.tolist() == [0.0, 1.0]


def test_lipa_profile_constant_and_singleton(line3):
    prof = lipa_profile(line3, [0, 1, 2], np.zeros(3), 0, [0.1, 0.6, 2.0])
    assert prof.constants.tolist() == [0.0, 0.0, 0.0]
    prof = lipa_profile(line3, [1], np.array([4.0]), 1, [0.1, 1.0])
    assert prof.constants.tolist() == [0.0, 0.0]


def test_lipa_profile_validation(line3):
    with pytest.raises(ParameterError):
        lipa_profile(line3, [0, 1], np.zeros(2), 2, [0.5])
    with pytest.raises(ParameterError):
        lipa_profile(line3, [0, 1], np.zeros(2), 0, [0.5, 0.5])


def test_lipa_profile_monotone_and_bounded():
    inst = random_instance(11, n_max=50)
    rng = np.random.default_rng(1)
    domain = np.arange(inst.n)
    vals = rng.normal(size=inst.n)
    radii = np.linspace(0.05, 3.0, 9)
    prof = lipa_profile(inst, domain, vals, 0, radii)
    assert np.all(np.diff(prof.constants) >= 0)
    assert prof.constants[-1] <= lip_constant(inst, vals, domain) + 1e-12


def test_lipa_profile_matches_ball_scan():
    inst = random_instance(5, n_max=40)
    rng = np.random.default_rng(2)
    domain = np.arange(inst.n)
    vals = rng.normal(size=inst.n)
    for r in [0.1, 0.4, 0.9]:
        prof = lipa_profile(inst, domain, vals, 3, [r])
        ball = ball_members(inst, 3, r, domain)
        assert prof.constants[0] == pytest.approx(
            oracle_lip(inst, vals[ball], ball), abs=1e-14)
