import itertools

import numpy as np
import pytest

from risbo import evaluation as ev
from risbo.channel import ChannelRealization, NoiseModel, PhaseConfig
from risbo.config import parse_config
from risbo.modem import Constellation
from risbo.numerics import RngStream

TINY = {
    "dims": {"k": 1, "n": 2, "p": 3, "b": 1},
    "training": {"n_tr": 120, "q": 1, "epochs": 15},
    "bo": {"n_bo": 3, "snr_db": 0.0},
    "eval": {"n_val_bits": 800, "n_test_bits": 4000, "snr_db": [-3.0, 3.0, 9.0]},
}


@pytest.fixture(scope="module")
def tiny():
    return parse_config(overrides=TINY)


def nested_loop_map(h, y, points):
    best, best_d = None, np.inf
    for s in itertools.product(points, repeat=h.shape[1]):
        d = np.sum(np.abs(y - h @ np.array(s)) ** 2)
        if d < best_d:
            best, best_d = np.array(s), d
    return best


def test_hypotheses_lexicographic():
    cand = ev.hypotheses(np.array([-1.0, 1.0]), 2)
    np.testing.assert_array_equal(cand.T, [[-1, -1], [-1, 1], [1, -1], [1, 1]])
    with pytest.raises(ev.OracleBoundError):
        ev.hypotheses(np.arange(4.0), 7)


def test_map_noiseless_recovery(rng):
    c = Constellation.qpsk()
    h = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    s = c.points[rng.integers(0, 4, (3, 50))]
    np.testing.assert_allclose(ev.map_detect(h, h @ s, c.points), s)


def test_map_scalar_is_sign_detector(rng):
    y = rng.standard_normal(200) * 2
    out = ev.map_detect(np.array([[0.7]]), y[None, :], np.array([-1.0, 1.0]))
    np.testing.assert_array_equal(out[0], np.where(y > 0, 1.0, -1.0))


def test_map_tie_goes_to_smallest_hypothesis():
    # zero observation with a zero channel ties every hypothesis
    out = ev.map_detect(np.zeros((2, 2)), np.zeros(2), np.array([-1.0, 1.0]))
    np.testing.assert_array_equal(out, [-1.0, -1.0])


def test_map_matches_nested_loop(rng):
    pts = np.array([-1.0, 1.0])
    for _ in range(30):
        h = rng.standard_normal((2, 2))
        y = h @ rng.choice(pts, 2) + rng.standard_normal(2)
        np.testing.assert_array_equal(ev.map_detect(h, y, pts), nested_loop_map(h, y, pts))


def test_map_oracle_detect_uses_effective_channel(rng):
    ch = ChannelRealization(rng.standard_normal((2, 2)) + 0j, rng.standard_normal((2, 2)) + 0j,
                            rng.standard_normal((2, 2)) + 0j, 1.0, 1.0, 10.0)
    phi = PhaseConfig.from_indices([0, 1], 2)
    c = Constellation.qpsk()
    s = c.points[rng.integers(0, 4, (2, 20))]
    y = (ch.h2 @ np.diag(phi.phases) @ ch.h1 + ch.g) @ s
    np.testing.assert_allclose(ev.map_oracle_detect(ch, phi, 0.0, y, c), s)


def test_calibration_hits_target():
    h = np.array([[1.0, 0.4], [0.3, 0.9]]) + 0j
    c = Constellation.qpsk()
    sigma2 = ev.calibrate_map_sigma2(h, c, 1e-2, 25_000, RngStream(0, 1))
    ber, n = ev.map_ber(h, c, NoiseModel(sigma2), 50_000, RngStream(1, 1))
    assert abs(ber - 1e-2) < 5 * ev.binomial_se(1e-2, n)


def test_spearman_and_se():
    assert ev.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert ev.binomial_se(0.5, 100) == pytest.approx(0.05)
    assert ev.binomial_se(0.0, 100) > 0


def test_sweep_rows_and_map_envelope(tiny):
    records = ev.snr_sweep(tiny, seed=1)
    assert len(records) == 3 * 2
    assert {r.detector for r in records} == {"deepsic_fixed_ris", "map_oracle"}
    by = {(r.snr_db, r.detector): r for r in records}
    for snr in tiny.eval.snr_db:
        d, m = by[(snr, "deepsic_fixed_ris")], by[(snr, "map_oracle")]
        assert d.n_bits == m.n_bits == 4000
        assert d.ber >= m.ber - 3 * ev.binomial_se(m.ber, m.n_bits)
    assert all(0 <= r.ber <= 1 for r in records)


def test_sweep_high_snr_limit_is_error_free(tiny):
    records = ev.snr_sweep(tiny, snr_points=[80.0], seed=2)
    assert [r.ber for r in records] == [0.0, 0.0]


def test_sweep_rejects_empty(tiny):
    with pytest.raises(ValueError):
        ev.snr_sweep(tiny, snr_points=[])


def test_sweep_without_map(tiny):
    cfg = tiny.with_overrides({"eval": {"map_oracle": False}})
    assert {r.detector for r in ev.snr_sweep(cfg, seed=1)} == {"deepsic_fixed_ris"}


def test_fig4a_control_curves_coincide(tiny):
    cfg = tiny.with_overrides({"eval": {"optimize_ris": False}})
    res = ev.experiment_fig4a(cfg, 4)
    np.testing.assert_array_equal(res.curve("deepsic_fixed_ris")[1], res.curve("deepsic_opt_ris")[1])
    assert res.runs == []


@pytest.mark.parametrize("mode,n_runs", [("reuse", 1), ("per_snr", 3)])
def test_fig4a_modes(tiny, mode, n_runs):
    res = ev.experiment_fig4a(tiny, 4, mode=mode)
    assert len(res.runs) == n_runs
    assert len(res.records) == 2 * len(tiny.eval.snr_db)
    for run, phi in zip(res.runs, res.phi_optimized):
        assert run.best_phi == phi
    with pytest.raises(ValueError):
        ev.experiment_fig4a(tiny, 4, mode="bogus")


def test_fig4b_paired(tiny):
    bo, rnd = ev.experiment_fig4b(tiny, 6)
    assert len(bo.trace) == len(rnd.trace) == tiny.bo.n_bo
    assert bo.trace[0].ber == rnd.trace[0].ber


def test_exhaustive_grid_oracle_covers_grid(tiny):
    cfg = tiny.with_overrides({"dims": {"p": 2}})
    out = ev.exhaustive_grid_oracle(cfg, 0)
    assert [phi.indices for phi, _ in out] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_oracle_suite_passes():
    results = ev.run_oracle_checks(0)
    assert len(results) == 4
    assert all(ok for _, ok, _ in results), results


def test_record_rows():
    r = ev.SweepRecord(-3.0, 0.125, "map_oracle", 1000, 2)
    assert r.to_row() == ["-3.0", "map_oracle", "0.125", 1000, 2]
    assert ev.records_as_dicts([r])[0]["detector"] == "map_oracle"
