import json
import math

import numpy as np
import pytest

from risbo import gp, jointopt
from risbo.config import parse_config
from risbo.deepsic import BerResult
from risbo.jointopt import (
    NonFiniteBerError,
    alternating_step_receiver,
    channel_for,
    initial_phase,
    run_joint,
    run_random_baseline,
)

TINY = {
    "dims": {"k": 1, "n": 2, "p": 3, "b": 1},
    "training": {"n_tr": 80, "q": 1, "epochs": 4},
    "bo": {"n_bo": 4, "snr_db": 0.0},
    "eval": {"n_val_bits": 800},
}


@pytest.fixture(scope="module")
def tiny():
    return parse_config(overrides=TINY)


@pytest.fixture(scope="module")
def pair(tiny):
    return run_joint(tiny, 3), run_random_baseline(tiny, 3)


def test_trace_shape_and_minimum(pair, tiny):
    for run in pair:
        assert len(run.trace) == tiny.bo.n_bo
        assert [e.t for e in run.trace] == [1, 2, 3, 4]
        assert np.all(np.diff(run.running_min) <= 0)
        assert run.min_ber == min(run.bers)
        assert run.best_entry.ber == run.min_ber
        assert run.best_index == int(np.flatnonzero(run.bers == run.min_ber)[0])
        assert run.best_phi == run.best_entry.phi
        assert run.pilot_transmissions == (tiny.bo.n_bo + 1) * tiny.training.n_tr
        assert 0 <= run.confirmation.ber <= 1


def test_paired_runs_share_first_iteration(pair, tiny):
    bo, rnd = pair
    assert bo.trace[0].phi == rnd.trace[0].phi == initial_phase(tiny, 3)
    assert bo.trace[0].ber == rnd.trace[0].ber
    assert bo.trace[0].streams == rnd.trace[0].streams


def test_no_configuration_revisited(pair):
    for run in pair:
        visited = [e.phi.indices for e in run.trace]
        assert len(set(visited)) == len(visited)


def test_same_phi_same_iteration_same_ber(tiny):
    # identical (seed, t, phi) must reproduce the BER regardless of strategy history
    ch = channel_for(tiny, 5)
    phi = initial_phase(tiny, 5)
    a = alternating_step_receiver(tiny, ch, phi, 5, 2)[1]
    b = alternating_step_receiver(tiny, ch, phi, 5, 2)[1]
    assert a == b


def test_deterministic_outputs(tiny, pair):
    again = run_joint(tiny, 3)
    assert again.trace_csv() == pair[0].trace_csv()
    assert jointopt.dumps(again) == jointopt.dumps(pair[0])


def test_budget_change_keeps_prefix(tiny, pair):
    shorter = run_joint(tiny.with_overrides({"bo": {"n_bo": 3}}), 3)
    for a, b in zip(shorter.trace, pair[0].trace):
        assert a.phi == b.phi and a.ber == b.ber


def test_trace_csv_golden_header(pair):
    lines = pair[0].trace_csv().splitlines()
    assert lines[0] == "iter,ber,running_min_ber,ser,phase_angle_1,phase_angle_2,phase_angle_3"
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "1"
    assert float(first[1]) == pair[0].trace[0].ber
    angles = [float(v) for v in first[4:]]
    np.testing.assert_array_equal(angles, pair[0].trace[0].phi.angles)


def test_json_excludes_timing_by_default(pair):
    doc = json.loads(jointopt.dumps(pair[0]))
    assert "duration_s" not in doc["trace"][0]
    assert "duration_s" in pair[0].to_json(timing=True)["trace"][0]
    assert doc["trace"][0]["streams"]["pilots"] == [4, 1]
    assert doc["best_iteration"] == pair[0].best_entry.t


def test_random_baseline_exhausts_small_grid():
    cfg = parse_config(overrides={**TINY, "dims": {"k": 1, "n": 2, "p": 2, "b": 1}})
    run = run_random_baseline(cfg, 0)
    assert {e.phi.indices for e in run.trace} == {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_nonfinite_ber_is_reported(tiny, monkeypatch):
    monkeypatch.setattr(jointopt, "validation_ber", lambda *a, **k: BerResult(math.nan, 0, 1, 0.0))
    with pytest.raises(NonFiniteBerError, match="iteration 1"):
        run_joint(tiny, 0)


def test_gp_failure_names_iteration(tiny, monkeypatch):
    def broken(*args, **kwargs):
        raise gp.GpFitError("no factorization")

    monkeypatch.setattr(gp, "fit", broken)
    with pytest.raises(gp.GpFitError, match="iteration 1"):
        run_joint(tiny, 0)
