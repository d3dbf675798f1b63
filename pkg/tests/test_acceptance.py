"""Acceptance criteria, one test each; outcomes are summarised at the end of the run."""

import itertools
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from ctxsense.behavior import (BehaviorFilterState, connected, connection_matrix,
                               connectivity_step, filter_stream)
from ctxsense.categories import (BEHAVIOURS, CATEGORY_GROUP, ENVIRONMENTS, GROUPS,
                                 MOVING_VEHICLE_GROUPS, ClassPosterior, grouped)
from ctxsense.config import PipelineConfig
from ctxsense.environment import (TABLE6, associated_transition, forward_filter,
                                  hmm_forward_step, viterbi_decode)
from ctxsense.evaluation import align_truth, evaluate_labels, evaluate_run
from ctxsense.features import (ENVIRONMENT, ENVIRONMENT_VEHICLE, HUMAN_ACTIVITY, HUMAN_VEHICLE,
                               ROLE_SCHEMAS, VEHICLE_MOTION, gnss_features, onesided_weights,
                               psd, window_feature_table)
from ctxsense.ingest import Window
from ctxsense.learn.kernels import KernelSpec, gram
from ctxsense.learn.multiclass import couple_pairwise
from ctxsense.learn.svm import train_svm
from ctxsense.modelfile import dumps, loads
from ctxsense.pipeline import (TrainingData, behaviour_track, dumps_records, run_pipeline,
                               train_models)
from ctxsense.synth import generate_scenario, pure_windows, tour_script, training_script

from oracles import (brute_filtered_marginals, brute_viterbi, naive_coupling,
                     naive_window_features, qp_svm)

INITIAL = np.array([0.4, 0.2, 0.4])
EVAL_SEED = 2024


@pytest.fixture(scope="module")
def tour():
    return generate_scenario(tour_script(), seed=EVAL_SEED)


# -- 1: features against the naive oracle -----------------------------------

def _random_window(rng, n=500):
    t = np.arange(n) / 100.0
    kind = rng.integers(3)
    if kind == 0:
        acc = 9.81 + rng.normal(0, rng.uniform(0.01, 3), n)
    elif kind == 1:
        f, a = rng.uniform(0.5, 45), rng.uniform(0.1, 5)
        acc = 9.81 + a * np.sin(2 * np.pi * f * t + rng.uniform(0, 6)) + rng.normal(0, 0.2, n)
    else:
        acc = rng.gamma(2.0, rng.uniform(0.5, 5), n)
    gyro = np.abs(rng.normal(0, rng.uniform(0.01, 2), n))
    magn = 40 + rng.normal(0, rng.uniform(0.1, 5), n)
    baro = 1013 + rng.uniform(-0.5, 0.5) * t + rng.normal(0, 0.05, n)
    return Window(0.0, acc, gyro, magn, baro)


def test_feature_oracle(acceptance):
    rng = np.random.default_rng(1)
    windows = [_random_window(rng) for _ in range(1000)]
    t0 = time.perf_counter()
    tables = [window_feature_table(w) for w in windows]
    elapsed = time.perf_counter() - t0
    worst, parseval = 0.0, 0.0
    for w, got in zip(windows, tables):
        ref = naive_window_features(w.accel_mag, w.gyro_mag, w.magn_mag, w.baro)
        for k, v in ref.items():
            worst = max(worst, abs(got[k] - v) / max(abs(v), 1e-300) if v else abs(got[k]))
        for x in (w.accel_mag, w.gyro_mag):
            x = x - x.mean()
            energy = 0.01 * float(np.dot(x, x))
            total = float(np.dot(onesided_weights(len(x)), psd(x)[1]))
            parseval = max(parseval, abs(total - energy) / energy)
    ok = worst <= 1e-9 and parseval <= 1e-9 and elapsed < 10.0
    acceptance(1, "features match oracle", ok,
               f"max rel err {worst:.2e}, Parseval {parseval:.2e}, 1000 windows in {elapsed:.2f} s")


# -- 2: SMO against a QP solver ---------------------------------------------

def _qp_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    X = rng.normal(size=(n, 2))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    if len(set(y)) < 2:
        y[0] = -y[1]
    kernel = KernelSpec("rbf", float(rng.uniform(0.1, 2))) if seed % 2 else KernelSpec("linear")
    beta = (0.1, 1.0, 10.0)[seed % 3]
    return X, y, kernel, beta, rng.normal(size=(20, 2))


QP_ERRORS = []


def test_smo_matches_qp(acceptance, dual_runs):
    for seed in range(1000, 1200):
        X, y, kernel, beta, pts = _qp_instance(seed)
        K = gram(kernel, X, X)
        alpha, bias = qp_svm(K, y, beta)
        m = train_svm(X, y, kernel, beta)
        P = np.vstack([X, pts])
        ref = gram(kernel, P, X) @ (alpha * y) + bias
        QP_ERRORS.append(float(np.max(np.abs(m.decision(P) - ref))))
    worst = max(QP_ERRORS)
    feasible = all(ok and r < 1e-8 for ok, r in dual_runs)
    acceptance(2, "SMO matches QP", worst <= 1e-3 and feasible,
               f"{len(QP_ERRORS)} instances, max |f - f_qp| {worst:.2e}; "
               f"{len(dual_runs)} dual runs feasible so far")


# -- 3: pairwise coupling ---------------------------------------------------

def _relabel(mu, perm):
    L = len(perm)
    full = np.full((L, L), 0.5)
    iu = np.triu_indices(L, 1)
    full[iu] = mu[iu]
    full[iu[1], iu[0]] = 1.0 - mu[iu]
    return np.triu(full[np.ix_(perm, perm)], 1)


def test_coupling_properties(acceptance):
    uniform = True
    for L in range(2, 10):
        p = couple_pairwise(np.full((L, L), 0.5)).probs
        uniform &= bool(np.all(p == p[0])) and abs(p[0] - 1 / L) <= 1e-15
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        L = int(rng.integers(2, 8))
        mu = np.triu(rng.random((L, L)), 1)
        perm = list(rng.permutation(L))
        p = couple_pairwise(mu).probs
        q = couple_pairwise(_relabel(mu, perm)).probs
        worst = max(worst, float(np.max(np.abs(q - p[perm]))),
                    float(np.max(np.abs(p - naive_coupling(mu)))))
    acceptance(3, "coupling uniform and equivariant", uniform and worst <= 1e-12,
               f"uniform for L=2..9: {uniform}; 100 tables, max deviation {worst:.2e}")


# -- 4: HMM against path enumeration ----------------------------------------

def test_hmm_matches_enumeration(acceptance):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst, paths_ok = 0.0, True
    for k in range(50):
        E = rng.dirichlet(np.ones(3), size=6)
        if k % 2:
            A = [associated_transition(float(p), TABLE6) for p in rng.random(5)]
        else:
            A = [TABLE6] * 5
        got = np.array([b.probs for b in forward_filter(E, INITIAL, A)])
        worst = max(worst, float(np.max(np.abs(got - brute_filtered_marginals(E, INITIAL, A)))))
        paths_ok &= viterbi_decode(E, INITIAL, A) == brute_viterbi(E, INITIAL, A)
    elapsed = time.perf_counter() - t0
    acceptance(4, "HMM forward and Viterbi vs enumeration",
               worst <= 1e-12 and paths_ok and elapsed < 5.0,
               f"50 sequences, max marginal err {worst:.2e}, Viterbi equal {paths_ok}, "
               f"{elapsed:.2f} s")


# -- 5: connectivity filter -------------------------------------------------

def test_connectivity_filter(acceptance):
    walk = ClassPosterior.one_hot(BEHAVIOURS, "Walking")
    spike = ClassPosterior.one_hot(BEHAVIOURS, "MovingUndergroundTrain")
    g = grouped(connectivity_step(BehaviorFilterState(walk, 0.5), spike))
    example = abs(g["H"] - 0.9) <= 1e-15 and abs(g["U"] - 0.1) <= 1e-15
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        alpha = float(rng.random())
        stream = [ClassPosterior(BEHAVIOURS, p)
                  for p in rng.dirichlet(np.ones(9) * rng.uniform(0.1, 3),
                                         size=int(rng.integers(1, 40)))]
        x = np.full(9, 1 / 9)
        for z, f in zip(stream, filter_stream(stream, alpha, np.ones((9, 9)))):
            x = alpha * z.probs + (1 - alpha) * x
            x /= x.sum()
            worst = max(worst, float(np.max(np.abs(f.probs - x))))
    acceptance(5, "connectivity filter", example and worst <= 1e-12,
               f"H/U after spike ({g['H']:.15f}, {g['U']:.15f}); "
               f"all-ones C vs smoothing max err {worst:.2e}")


# -- 6: stationarity-associated transitions ---------------------------------

def test_association_extremes(acceptance):
    A1 = associated_transition(1.0, TABLE6)
    A0 = associated_transition(0.0, TABLE6)
    Ah = associated_transition(0.5, TABLE6)
    rng = np.random.default_rng(6)
    b = ClassPosterior(ENVIRONMENTS, rng.dirichlet(np.ones(3)))
    fixed = hmm_forward_step(b, np.ones(3), A1)
    ok = (np.array_equal(A1, np.eye(3)) and np.array_equal(A0, TABLE6)
          and abs(Ah[0, 0] - 5 / 6) <= 1e-15
          and float(np.max(np.abs(fixed.probs - b.probs))) <= 1e-15)
    acceptance(6, "stationarity association", ok,
               f"A(1)=I, A(0)=A0, A(0.5)[I,I]={Ah[0, 0]:.15f}, belief fixed under A(1)")


# -- 7: end-to-end accuracy -------------------------------------------------

E2E = {}


def test_end_to_end_accuracy(acceptance, tour):
    config = PipelineConfig()
    t0 = time.perf_counter()
    train = generate_scenario(training_script(), seed=101)
    data = TrainingData.from_scenarios([train], config)
    bundle = train_models(data, config)
    records = run_pipeline(bundle, config, tour.imu, tour.gnss)
    reports = evaluate_run(records, tour.truth)
    elapsed = time.perf_counter() - t0
    E2E.update(bundle=bundle, records=records)
    counts = {c: sum(w.label == c for w in data.windows) for c in BEHAVIOURS}
    envs = [e for _, e in data.epochs]
    corpus = min(counts.values()) >= 200 and min(envs.count(e) for e in ENVIRONMENTS) >= 200
    b = reports["behavior"].accuracy
    e, e_raw = reports["environment"].accuracy, reports["environment_raw"].accuracy
    ok = corpus and b >= 0.90 and e >= 0.90 and e >= e_raw and elapsed < 120.0
    acceptance(7, "end-to-end accuracy", ok,
               f"behaviour {b:.3f}, environment HMM {e:.3f} vs raw {e_raw:.3f}, "
               f"min windows {min(counts.values())}, {elapsed:.1f} s")


# -- 8: response delay ------------------------------------------------------

DELAY_SCRIPTS = [
    [("Stationary", "Indoor", 40), ("Walking", "Indoor", 40), ("AscendingStairs", "Indoor", 40),
     ("Walking", "Intermediate", 40), ("Running", "Outdoor", 40), ("Walking", "Outdoor", 40),
     ("StationaryVehicleEngineOn", "Outdoor", 40), ("MovingBus", "Outdoor", 40),
     ("StationaryVehicleEngineOn", "Outdoor", 40), ("Walking", "Outdoor", 40),
     ("DescendingStairs", "Indoor", 40)],
    [("Walking", "Indoor", 40), ("StationaryVehicleEngineOn", "Indoor", 40),
     ("MovingUndergroundTrain", "Indoor", 40), ("StationaryVehicleEngineOn", "Indoor", 40),
     ("Walking", "Indoor", 40), ("AscendingStairs", "Indoor", 40),
     ("Walking", "Intermediate", 40), ("Stationary", "Outdoor", 40),
     ("StationaryVehicleEngineOn", "Outdoor", 40), ("MovingDieselTrain", "Outdoor", 40),
     ("StationaryVehicleEngineOn", "Outdoor", 40)],
]


def test_response_delay(acceptance, bundle):
    bd, ed = [], []
    for k, script in enumerate(DELAY_SCRIPTS):
        sc = generate_scenario(script, seed=300 + k)
        records = run_pipeline(bundle, PipelineConfig(), sc.imu, sc.gnss)
        reports = evaluate_run(records, sc.truth)
        bd += reports["behavior"].delays
        ed += reports["environment"].delays
    mb, me = float(np.mean(bd)), float(np.mean(ed))
    acceptance(8, "argmax response delay", len(bd) == 20 and mb <= 3 and me <= 3,
               f"behaviour {mb:.2f} epochs over {len(bd)} changes, "
               f"environment {me:.2f} over {len(ed)}")


# -- 9: spike suppression ---------------------------------------------------

def test_spike_suppression(acceptance, bundle, tour):
    steps = behaviour_track(tour.imu, bundle.behavior)
    truth = [r[1] for r in align_truth([{"t": s.t} for s in steps], tour.truth)]
    rng = np.random.default_rng(9)
    n = len(steps)
    spikes = set(rng.choice(np.arange(1, n), size=round(0.05 * n), replace=False).tolist())
    z = [s.raw for s in steps]
    for k in spikes:
        wrong = [c for c in BEHAVIOURS if c != truth[k]]
        z[k] = ClassPosterior.one_hot(BEHAVIOURS, wrong[rng.integers(len(wrong))])
    out = filter_stream(z, 0.5, connection_matrix())
    pre = evaluate_labels(truth, [p.argmax for p in z], BEHAVIOURS).accuracy
    post = evaluate_labels(truth, [p.argmax for p in out], BEHAVIOURS).accuracy
    jumps = 0
    for k in range(1, n):
        a, b = CATEGORY_GROUP[out[k - 1].argmax], CATEGORY_GROUP[out[k].argmax]
        jumps += a != b and a in MOVING_VEHICLE_GROUPS and b in MOVING_VEHICLE_GROUPS
    acceptance(9, "spike suppression", post > pre and jumps == 0,
               f"{len(spikes)} spikes in {n} epochs, accuracy {pre:.3f} -> {post:.3f}, "
               f"moving-vehicle jumps {jumps}")


# -- 10: determinism and round trip -----------------------------------------

def _cli(*args, env):
    return subprocess.run([sys.executable, "-m", "ctxsense", *args], env=env,
                          capture_output=True, text=True, check=True)


def _role_inputs(bundle, scenario, rng, n=1000):
    tables = [window_feature_table(w) for w in pure_windows(scenario)[::7]]
    out = {}
    for role in (HUMAN_VEHICLE, HUMAN_ACTIVITY, VEHICLE_MOTION):
        F = np.array([[t[k] for k in ROLE_SCHEMAS[role]] for t in tables])
        out[role] = F.mean(axis=0) + 2 * F.std(axis=0) * rng.normal(size=(n, F.shape[1]))
    G = np.array([gnss_features(e).values for e in scenario.gnss])
    out[ENVIRONMENT] = G.mean(axis=0) + 2 * G.std(axis=0) * rng.normal(size=(n, 3))
    out[ENVIRONMENT_VEHICLE] = out[ENVIRONMENT][:, :2]
    return out


def _role_models(bundle):
    b, e = bundle.behavior, bundle.environment
    return {HUMAN_VEHICLE: b.human_vehicle, HUMAN_ACTIVITY: b.human_activity,
            VEHICLE_MOTION: b.vehicle_motion, ENVIRONMENT: e.pedestrian,
            ENVIRONMENT_VEHICLE: e.vehicle}


def test_determinism_and_round_trip(acceptance, bundle, training_scenario, tmp_path):
    data = tmp_path / "train"
    base = dict(os.environ)
    _cli("simulate", "--preset", "training", "--seconds", "210", "--seed", "7",
         "-o", str(data), env=base)
    sim = tmp_path / "tour"
    _cli("simulate", "--preset", "tour", "--seconds", "20", "--seed", "8", "-o", str(sim),
         env=base)
    models, outputs = [], []
    for k, hashseed in enumerate(("1", "2")):
        env = dict(base, PYTHONHASHSEED=hashseed)
        model = tmp_path / f"model{k}.json"
        _cli("train", str(data), "-o", str(model), env=env)
        out = tmp_path / f"run{k}.jsonl"
        _cli("run", "--model", str(model), "--imu", str(sim / "imu.csv"),
             "--gnss", str(sim / "gnss.csv"), "-o", str(out), env=env)
        models.append(model.read_bytes())
        outputs.append(out.read_bytes())
    same_model, same_run = models[0] == models[1], outputs[0] == outputs[1]

    loaded = loads(dumps(bundle))
    inputs = _role_inputs(bundle, training_scenario, np.random.default_rng(10))
    before, after = _role_models(bundle), _role_models(loaded)
    identical = {role: bool(np.array_equal(before[role].predict_proba(X),
                                           after[role].predict_proba(X)))
                 for role, X in inputs.items()}
    same_records = (dumps_records(run_pipeline(bundle, PipelineConfig(), None, training_scenario.gnss))
                    == dumps_records(run_pipeline(loaded, PipelineConfig(), None,
                                                  training_scenario.gnss)))
    ok = same_model and same_run and all(identical.values()) and same_records
    acceptance(10, "determinism and round trip", ok,
               f"model bytes equal {same_model}, run bytes equal {same_run}, "
               f"predict_proba equal on 1000 inputs for {sum(identical.values())}/5 roles")


# -- 2, continued: every SMO run in the session -----------------------------

def test_every_dual_run_feasible(acceptance, dual_runs):
    feasible = all(ok and r < 1e-8 for ok, r in dual_runs)
    worst = max((r for _, r in dual_runs), default=0.0)
    acceptance(2, "SMO matches QP", bool(QP_ERRORS) and max(QP_ERRORS) <= 1e-3 and feasible,
               f"{len(QP_ERRORS)} instances, max |f - f_qp| {max(QP_ERRORS, default=0):.2e}; "
               f"{len(dual_runs)} dual runs feasible {feasible}, max |a.y| {worst:.1e}")
