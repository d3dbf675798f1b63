import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctxsense.categories import ENVIRONMENTS, VEHICLE_ENVIRONMENTS, ClassPosterior
from ctxsense.environment import (TABLE6, EnvironmentModels, HmmParams, ModeSelector,
                                  align_p_stat, associated_transition,
                                  detect_environment_sequence, emission_from_posterior,
                                  forward_filter, hmm_forward_step, hmm_initial,
                                  viterbi_decode)
from ctxsense.errors import (AlignmentError, ConfigurationError, DegenerateStateError,
                             PreconditionError)
from ctxsense.ingest import GnssEpoch, GnssEpochSeries
from ctxsense.synth import generate_gnss

from oracles import brute_filtered_marginals, brute_viterbi

PRIORS = np.array([0.4, 0.2, 0.4])
INITIAL = np.array([0.4, 0.2, 0.4])

simplex3 = st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=3).map(
    lambda w: np.array(w) / sum(w))


def belief(*p):
    return ClassPosterior(ENVIRONMENTS, np.array(p, dtype=float))


class Fixed:
    """Environment classifier returning canned rows, one per call row."""

    def __init__(self, classes, rows):
        self.classes = tuple(classes)
        self.rows = np.asarray(rows, dtype=float)
        self.feature_names = ("F1", "F2", "F3")[:3 if len(classes) == 3 else 2]

    def predict_proba(self, X):
        return self.rows[:len(np.atleast_2d(X))]


def series(n, t0=0.0):
    return GnssEpochSeries(tuple(GnssEpoch(t0 + k) for k in range(n)))


# -- parameters --------------------------------------------------------------

def test_table6_orientation():
    assert np.allclose(TABLE6.sum(axis=0), 1.0)
    assert TABLE6[2, 0] == 0.0 and TABLE6[0, 2] == 0.0
    p = HmmParams.pedestrian()
    assert np.allclose(p.initial, INITIAL) and np.allclose(p.priors, PRIORS)
    v = HmmParams.vehicle()
    assert v.states == VEHICLE_ENVIRONMENTS
    np.testing.assert_allclose(v.transition, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])


def test_hmm_params_validation():
    with pytest.raises(PreconditionError):
        HmmParams(ENVIRONMENTS, np.array([0.5, 0.5, 0.5]), TABLE6, PRIORS)
    with pytest.raises(PreconditionError):
        HmmParams(ENVIRONMENTS, INITIAL, TABLE6.T * 2, PRIORS)
    p = HmmParams.pedestrian()
    q = HmmParams.from_dict(p.to_dict())
    assert np.array_equal(q.transition, p.transition) and q.states == p.states


# -- emission ----------------------------------------------------------------

def test_emission_examples():
    np.testing.assert_allclose(emission_from_posterior(PRIORS, PRIORS), 1 / 3, rtol=1e-15)
    e = emission_from_posterior([0.8, 0.1, 0.1], PRIORS)
    np.testing.assert_allclose(e, np.array([2.0, 0.5, 0.25]) / 2.75, rtol=1e-15)
    np.testing.assert_allclose(e, [0.727, 0.182, 0.091], atol=5e-4)
    d = emission_from_posterior([1.0, 0.0, 0.0], PRIORS)
    assert d[0] == pytest.approx(1.0, abs=1e-8) and 0 < d[1] < 1e-8 and 0 < d[2] < 1e-8


@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda w: sum(w) > 0))
def test_emission_is_distribution(w):
    e = emission_from_posterior(np.array(w) / sum(w), PRIORS)
    assert np.all(e > 0) and abs(e.sum() - 1) < 1e-9


# -- association -------------------------------------------------------------

def test_association_examples():
    assert np.array_equal(associated_transition(1.0, TABLE6), np.eye(3))
    assert np.array_equal(associated_transition(0.0, TABLE6), TABLE6)
    assert associated_transition(0.5, TABLE6)[0, 0] == pytest.approx(5 / 6, abs=1e-15)
    with pytest.raises(PreconditionError):
        associated_transition(1.2, TABLE6)


@given(st.floats(0.0, 1.0))
def test_association_stays_stochastic(p):
    A = associated_transition(p, TABLE6)
    assert np.all(A >= 0)
    np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-15)


@given(simplex3, st.floats(0, 1), st.floats(0, 1))
def test_association_monotone(b, p1, p2):
    lo, hi = sorted((p1, p2))
    u = np.full(3, 1 / 3)
    tv = lambda p: 0.5 * np.abs(hmm_forward_step(belief(*b), u,
                                                 associated_transition(p, TABLE6)).probs - b).sum()
    assert tv(hi) <= tv(lo) + 1e-12


# -- forward filter ----------------------------------------------------------

def test_pure_indoor_step():
    out = hmm_forward_step(belief(1, 0, 0), np.full(3, 1 / 3), TABLE6)
    np.testing.assert_allclose(out.probs, [2 / 3, 1 / 3, 0.0], atol=1e-15)
    assert out["Outdoor"] == 0.0
    back = hmm_forward_step(belief(0, 0, 1), np.full(3, 1 / 3), TABLE6)
    assert back["Indoor"] == 0.0


@given(simplex3, simplex3)
def test_identity_transition_is_product(b, e):
    out = hmm_forward_step(belief(*b), e, np.eye(3))
    np.testing.assert_allclose(out.probs, b * e / np.sum(b * e), rtol=1e-12)


def test_filter_degenerate_mass():
    with pytest.raises(DegenerateStateError):
        hmm_forward_step(belief(1, 0, 0), np.array([0.0, 0.0, 1.0]), TABLE6)


def test_stationary_everywhere_freezes_belief():
    E = np.full((8, 3), 1 / 3)
    beliefs = forward_filter(E, INITIAL, [np.eye(3)] * 7)
    for b in beliefs:
        np.testing.assert_allclose(b.probs, beliefs[0].probs, atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_forward_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 7))
    E = rng.dirichlet(np.ones(3), size=T)
    A = [associated_transition(float(p), TABLE6) for p in rng.random(T - 1)]
    got = np.array([b.probs for b in forward_filter(E, INITIAL, A)])
    np.testing.assert_allclose(got, brute_filtered_marginals(E, INITIAL, A), atol=1e-12)


# -- Viterbi -----------------------------------------------------------------

def test_viterbi_single_epoch():
    e = np.array([0.2, 0.5, 0.3])
    assert viterbi_decode(e[None], INITIAL, TABLE6) == [int(np.argmax(INITIAL * e))]


def test_viterbi_uniform_ties_go_low():
    path = viterbi_decode(np.full((6, 3), 1 / 3), INITIAL, TABLE6)
    brute = brute_viterbi(np.full((6, 3), 1 / 3), INITIAL, [TABLE6] * 5)
    assert path == brute == [0] * 6


@pytest.mark.parametrize("seed", range(10))
def test_viterbi_matches_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    T = int(rng.integers(1, 7))
    E = rng.dirichlet(np.ones(3), size=T)
    A = [associated_transition(float(p), TABLE6) for p in rng.random(T - 1)]
    assert viterbi_decode(E, INITIAL, A) == brute_viterbi(E, INITIAL, A)


def test_viterbi_never_uses_forbidden_transition():
    E = np.array([[0.98, 0.01, 0.01], [0.01, 0.01, 0.98]])
    path = viterbi_decode(E, INITIAL, TABLE6)
    assert path != [0, 2]
    with pytest.raises(PreconditionError):
        viterbi_decode(np.zeros((0, 3)), INITIAL, TABLE6)


# -- alignment and mode selection --------------------------------------------

def test_align_p_stat():
    out = align_p_stat(np.array([0.0, 1.0, 2.0]), [(0.2, 0.7), (2.4, 1.0)])
    np.testing.assert_allclose(out, [0.7, 0.0, 1.0])
    with pytest.raises(AlignmentError):
        align_p_stat(np.array([0.0, 1.0]), [(1.6, 0.5)])
    assert not align_p_stat(np.array([0.0, 1.0]), None).any()


def test_mode_selector_hysteresis():
    sel = ModeSelector(hysteresis=3)
    seen = [sel.update(o) for o in ["a", "b", "b", "a", "b", "b", "b", "b"]]
    assert seen == ["a", "a", "a", "a", "a", "a", "b", "b"]


# -- whole sequences ---------------------------------------------------------

def test_absent_p_stat_uses_base_matrix():
    rows = np.random.default_rng(3).dirichlet(np.ones(3), size=5)
    track = detect_environment_sequence(series(5), Fixed(ENVIRONMENTS, rows))
    assert track.steps[0].transition is None
    for s in track.steps[1:]:
        assert np.array_equal(s.transition, TABLE6) and s.p_stat == 0.0
    expected = forward_filter([emission_from_posterior(r, PRIORS) for r in rows], INITIAL, TABLE6)
    for s, b in zip(track.steps, expected):
        np.testing.assert_allclose(s.belief.probs, b.probs, rtol=1e-14)


def test_full_stationarity_freezes_sequence():
    rows = np.tile(PRIORS, (6, 1))  # emission uniform
    p_stat = [(k, 1.0) for k in range(6)]
    track = detect_environment_sequence(series(6), Fixed(ENVIRONMENTS, rows), p_stat=p_stat)
    for s in track.steps:
        np.testing.assert_allclose(s.belief.probs, track.steps[0].belief.probs, atol=1e-15)


def test_vehicle_mode_switch_converts_belief():
    ped = Fixed(ENVIRONMENTS, np.tile([0.2, 0.6, 0.2], (4, 1)))
    veh = Fixed(VEHICLE_ENVIRONMENTS, np.tile([0.5, 0.5], (4, 1)))
    models = EnvironmentModels(ped, veh)
    track = detect_environment_sequence(series(4), models,
                                        modes=["pedestrian", "pedestrian", "vehicle", "vehicle"])
    assert track.steps[2].belief.labels == VEHICLE_ENVIRONMENTS
    prev = track.steps[1].belief
    split = np.array([prev["Indoor"] + prev["Intermediate"] / 2,
                      prev["Outdoor"] + prev["Intermediate"] / 2])
    expected = HmmParams.vehicle().transition @ split
    np.testing.assert_allclose(track.steps[2].belief.probs, expected / expected.sum(), rtol=1e-12)
    with pytest.raises(ConfigurationError):
        detect_environment_sequence(series(2), EnvironmentModels(ped), modes=["vehicle"] * 2)


def test_bare_two_class_model_runs_vehicle_mode():
    veh = Fixed(VEHICLE_ENVIRONMENTS, np.tile([0.9, 0.1], (3, 1)))
    track = detect_environment_sequence(series(3), veh)
    assert {s.mode for s in track.steps} == {"vehicle"}
    assert track.labels() == ["Indoor"] * 3


def test_decode_path():
    rows = np.random.default_rng(4).dirichlet(np.ones(3), size=6)
    track = detect_environment_sequence(series(6), Fixed(ENVIRONMENTS, rows), decode=True)
    E = [emission_from_posterior(r, PRIORS) for r in rows]
    assert list(track.path) == [ENVIRONMENTS[k] for k in brute_viterbi(E, INITIAL, [TABLE6] * 5)]


def test_synthetic_outdoor_converges(bundle):
    s = generate_gnss("Outdoor", 10, seed=5).series
    track = detect_environment_sequence(s, bundle.environment.pedestrian)
    reached = [k for k, step in enumerate(track.steps) if step.belief["Outdoor"] > 0.95]
    assert reached and reached[0] <= 2
    assert np.mean([step.belief.argmax == "Outdoor" for step in track.steps]) == 1.0


def test_synthetic_outdoor_to_indoor(bundle):
    out = generate_gnss("Outdoor", 10, seed=5).series
    ind = generate_gnss("Indoor", 10, seed=6, t0=10).series
    track = detect_environment_sequence(GnssEpochSeries(out.epochs + ind.epochs),
                                        bundle.environment.pedestrian)
    inside = [k for k, s in enumerate(track.steps) if s.belief["Indoor"] > 0.5]
    assert inside and 1 <= inside[0] - 10 + 1 <= 3
    # the Intermediate state carries the mass across; no direct Outdoor -> Indoor jump
    first = inside[0]
    assert track.steps[first - 1].belief.argmax != "Indoor"
    assert track.steps[first - 1].belief["Intermediate"] > track.steps[9].belief["Intermediate"]
