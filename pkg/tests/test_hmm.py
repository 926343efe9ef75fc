import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frameseek.data import generate_synthetic
from frameseek.hmm import (
    HmmParams,
    ObservationSet,
    estimate_emission,
    estimate_initial,
    estimate_transition,
    forward_backward,
    stationary_distribution,
)

from conftest import enumeration_posterior, random_evidence, random_params


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def test_estimate_transition_hand_count():
    got = estimate_transition([[0, 0, 1, 1, 1, 0]], smoothing=0)
    np.testing.assert_allclose(got, [[0.5, 0.5], [1 / 3, 2 / 3]])


def test_estimate_transition_add_one_smoothing():
    got = estimate_transition([[0, 0, 0]], smoothing=1)
    np.testing.assert_allclose(got, [[3 / 4, 1 / 4], [1 / 2, 1 / 2]])


def test_estimate_transition_single_pairs():
    got = estimate_transition([[0, 1], [1, 0]], smoothing=0)
    np.testing.assert_allclose(got, [[0, 1], [1, 0]])


def test_estimate_transition_rejects_empty_and_short():
    with pytest.raises(ValueError, match="insufficient data"):
        estimate_transition([], smoothing=1)
    with pytest.raises(ValueError, match="insufficient data"):
        estimate_transition([[0], [1]], smoothing=1)


def test_estimate_transition_degenerate_row():
    with pytest.raises(ValueError, match="degenerate row"):
        estimate_transition([[0, 0, 0]], smoothing=0)


def test_estimate_transition_rejects_bad_labels():
    with pytest.raises(ValueError, match="labels"):
        estimate_transition([[0, 2]], smoothing=1)
    with pytest.raises(ValueError, match="smoothing"):
        estimate_transition([[0, 1]], smoothing=-1)


def test_estimate_emission_cooccurrence():
    got = estimate_emission([[0, 0, 1]], [[0, 1, 2]], smoothing=0)
    np.testing.assert_allclose(got, [[0.5, 0.5, 0], [0, 0, 1]])


def test_estimate_emission_add_one_smoothing():
    got = estimate_emission([[1]], [[2]], smoothing=1)
    np.testing.assert_allclose(got, [[1 / 3, 1 / 3, 1 / 3], [1 / 4, 1 / 4, 2 / 4]])


def test_estimate_emission_separating():
    got = estimate_emission([[0, 1]], [[0, 2]], smoothing=0)
    np.testing.assert_allclose(got, [[1, 0, 0], [0, 0, 1]])


def test_estimate_emission_misaligned():
    with pytest.raises(ValueError, match="misaligned sequences"):
        estimate_emission([[0, 1]], [[0]], smoothing=1)
    with pytest.raises(ValueError, match="misaligned sequences"):
        estimate_emission([[0, 1]], [[0, 1], [2]], smoothing=1)


def test_estimate_emission_degenerate_row():
    with pytest.raises(ValueError, match="degenerate row"):
        estimate_emission([[0]], [[1]], smoothing=0)


def test_estimate_initial_frequency():
    got = estimate_initial([[0, 0, 1], [1]])
    np.testing.assert_allclose(got, [0.5, 0.5])


@given(
    st.lists(
        st.lists(st.integers(min_value=0, max_value=1), min_size=2, max_size=30),
        min_size=1,
        max_size=5,
    ),
    st.floats(min_value=0.01, max_value=10),
)
@settings(max_examples=50, deadline=None)
def test_estimated_matrices_are_row_stochastic(sequences, smoothing):
    transition = estimate_transition(sequences, smoothing=smoothing)
    np.testing.assert_allclose(transition.sum(axis=1), 1.0, atol=1e-12)
    assert transition.min() >= 0 and transition.max() <= 1

    rng = np.random.default_rng(0)
    obs = [rng.integers(0, 3, size=len(seq)) for seq in sequences]
    emission = estimate_emission(sequences, obs, smoothing=smoothing)
    np.testing.assert_allclose(emission.sum(axis=1), 1.0, atol=1e-12)
    assert emission.min() >= 0 and emission.max() <= 1


def test_estimation_recovers_generating_model():
    params = HmmParams(
        transition=np.array([[0.95, 0.05], [0.1, 0.9]]),
        emission=np.array([[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]),
        initial=np.array([2 / 3, 1 / 3]),
        quantile_boundaries=(1 / 3, 2 / 3),
    )
    record, obs = generate_synthetic(params, 100_000, rng_seed=1234)
    transition = estimate_transition([record.labels], smoothing=1)
    emission = estimate_emission([record.labels], [obs], smoothing=1)
    np.testing.assert_allclose(transition, params.transition, atol=0.01)
    np.testing.assert_allclose(emission, params.emission, atol=0.01)


# ---------------------------------------------------------------------------
# parameter validation and serialization
# ---------------------------------------------------------------------------


def _valid_kwargs():
    return dict(
        transition=np.array([[0.9, 0.1], [0.2, 0.8]]),
        emission=np.array([[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]),
        initial=np.array([0.5, 0.5]),
        quantile_boundaries=(0.3, 0.6),
    )


def test_params_validation():
    HmmParams(**_valid_kwargs())  # sanity

    bad = _valid_kwargs()
    bad["transition"] = np.array([[0.9, 0.2], [0.2, 0.8]])
    with pytest.raises(ValueError, match="sum to 1"):
        HmmParams(**bad)

    bad = _valid_kwargs()
    bad["emission"] = np.array([[1.2, -0.1, -0.1], [0.1, 0.3, 0.6]])
    with pytest.raises(ValueError, match="lie in"):
        HmmParams(**bad)

    bad = _valid_kwargs()
    bad["quantile_boundaries"] = (0.6, 0.3)
    with pytest.raises(ValueError, match="ascending"):
        HmmParams(**bad)

    bad = _valid_kwargs()
    bad["initial"] = np.array([0.6, 0.6])
    with pytest.raises(ValueError, match="sum to 1"):
        HmmParams(**bad)


def test_params_arrays_are_immutable():
    params = HmmParams(**_valid_kwargs())
    with pytest.raises(ValueError):
        params.transition[0, 0] = 0.5


def test_params_json_round_trip(tmp_path):
    params = HmmParams(**_valid_kwargs())
    doc = json.loads(params.to_json())
    assert sorted(doc) == ["emission", "initial", "quantile_boundaries", "transition"]
    back = HmmParams.from_json(params.to_json())
    np.testing.assert_array_equal(back.transition, params.transition)
    np.testing.assert_array_equal(back.emission, params.emission)
    np.testing.assert_array_equal(back.initial, params.initial)
    assert back.quantile_boundaries == params.quantile_boundaries

    path = tmp_path / "params.json"
    params.save(path)
    loaded = HmmParams.load(path)
    np.testing.assert_array_equal(loaded.emission, params.emission)

    with pytest.raises(ValueError, match="missing key"):
        HmmParams.from_json("{}")


# ---------------------------------------------------------------------------
# forward-backward
# ---------------------------------------------------------------------------


def test_no_evidence_identity_chain_keeps_initial():
    params = HmmParams(
        transition=np.eye(2),
        emission=np.array([[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]),
        initial=np.array([0.3, 0.7]),
        quantile_boundaries=(0.3, 0.6),
    )
    belief = forward_backward(params, 5, ObservationSet())
    np.testing.assert_allclose(belief, 0.7, atol=1e-12)


def test_matches_enumeration_on_spec_instance():
    params = HmmParams(
        transition=np.array([[0.9, 0.1], [0.2, 0.8]]),
        emission=np.array([[0.6, 0.3, 0.1], [0.1, 0.3, 0.6]]),
        initial=np.array([0.5, 0.5]),
        quantile_boundaries=(0.3, 0.6),
    )
    observations = ObservationSet.from_observations({1: 2})
    belief = forward_backward(params, 3, observations)
    expected = enumeration_posterior(params, 3, observations)
    np.testing.assert_allclose(belief, expected, atol=1e-12)


def test_matches_enumeration_randomized():
    rng = np.random.default_rng(42)
    for _ in range(40):
        T = int(rng.integers(1, 13))
        params = random_params(rng)
        observations = random_evidence(rng, T, int(rng.integers(0, T + 1)))
        belief = forward_backward(params, T, observations)
        expected = enumeration_posterior(params, T, observations)
        np.testing.assert_allclose(belief, expected, atol=1e-9)


def test_single_frame_bayes_rule():
    rng = np.random.default_rng(3)
    for x in range(3):
        params = random_params(rng)
        belief = forward_backward(params, 1, ObservationSet.from_observations({0: x}))
        e, pi = params.emission, params.initial
        expected = pi[1] * e[1, x] / (pi[0] * e[0, x] + pi[1] * e[1, x])
        np.testing.assert_allclose(belief[0], expected, atol=1e-12)


def test_stationary_initial_gives_constant_belief():
    rng = np.random.default_rng(11)
    for _ in range(10):
        transition = rng.dirichlet(np.ones(2), size=2)
        params = HmmParams(
            transition=transition,
            emission=rng.dirichlet(np.ones(3), size=2),
            initial=stationary_distribution(transition),
            quantile_boundaries=(0.0, 1.0),
        )
        belief = forward_backward(params, 50, ObservationSet())
        np.testing.assert_allclose(belief, belief[0], atol=1e-12)


def test_stationary_distribution_fixed_point():
    rng = np.random.default_rng(5)
    for _ in range(20):
        transition = rng.dirichlet(np.ones(2), size=2)
        pi = stationary_distribution(transition)
        np.testing.assert_allclose(pi @ transition, pi, atol=1e-12)
    np.testing.assert_allclose(stationary_distribution(np.eye(2)), [0.5, 0.5])


def test_observation_index_out_of_bounds():
    params = HmmParams(**_valid_kwargs())
    with pytest.raises(ValueError, match="index out of bounds"):
        forward_backward(params, 3, ObservationSet.from_observations({3: 1}))
    with pytest.raises(ValueError, match="at least 1"):
        forward_backward(params, 0, ObservationSet())


def test_long_chain_stays_normalized():
    params = HmmParams(**_valid_kwargs())
    observations = ObservationSet.from_observations({0: 0, 50_000: 2, 99_999: 1})
    belief = forward_backward(params, 100_000, observations)
    assert np.isfinite(belief).all()
    assert belief.min() >= 0.0 and belief.max() <= 1.0


def test_observation_set_rejects_duplicates_and_bad_values():
    observations = ObservationSet.from_observations({2: 1})
    with pytest.raises(ValueError, match="already observed"):
        observations.added(2, 0.5, 1)
    with pytest.raises(ValueError, match="out of range"):
        observations.added(3, 0.5, 7)
    extended = observations.added(4, 0.9, 2)
    assert len(observations) == 1 and len(extended) == 2
