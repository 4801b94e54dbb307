import math

import numpy as np
import pytest

from mccdma import simulate
from mccdma.exceptions import DegenerateWeightsError, SimulationError
from mccdma.simulate import SimConfig, ber_reference_rayleigh, run_sweep, run_trial

SMALL = dict(n_t=2, n_r=2, pg=8, users=2, num_taps=3, n_data=2, trials=40)


def siso_bpsk(**kw):
    base = dict(
        n_t=1, n_r=1, pg=1, users=1, n_sc=1, n_fft=1, cp_len=0, scheme="bpsk",
        profile="flat", n_train=1, n_data=1, csi="perfect", estimator="ls",
    )
    base.update(kw)
    return SimConfig(**base)


class TestConfig:
    def test_derived_defaults(self):
        cfg = SimConfig(n_t=2, n_r=2, pg=32).resolved()
        assert (cfg.n_sc, cfg.n_fft, cfg.cp_len, cfg.n_train, cfg.kept_taps) == (128, 128, 16, 2, 4)
        assert cfg.snr_grid_db == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

    @pytest.mark.parametrize(
        "kw",
        [dict(pg=12), dict(users=16), dict(n_sc=100, n_fft=64), dict(cp_len=64, n_fft=64),
         dict(pilot="comb", n_pilots=3), dict(estimator="kalman"), dict(n_train=1)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**{**SMALL, **kw}).resolved()


class TestRunTrial:
    def test_deterministic(self):
        cfg = SimConfig(**SMALL)
        assert run_trial(cfg, 10.0, 3) == run_trial(cfg, 10.0, 3)
        assert run_trial(cfg, 10.0, 3) != run_trial(cfg, 10.0, 4)

    def test_noiseless_perfect_csi_error_free(self):
        cfg = SimConfig(**SMALL, csi="perfect", snr_grid_db=(math.inf,))
        for t in range(5):
            c = run_trial(cfg, math.inf, t)
            assert c.bit_errors == 0 and c.symbol_errors == 0

    @pytest.mark.parametrize("combiner", ["mmse", "zf", "egc"])
    def test_noiseless_estimated_csi_error_free(self, combiner):
        cfg = SimConfig(**SMALL, combiner=combiner, snr_grid_db=(math.inf,))
        c = run_trial(cfg, math.inf, 0)
        assert c.sq_err_ls < 1e-20 and c.sq_err_mmse < 1e-20
        if combiner != "egc":
            assert c.bit_errors == 0

    def test_off_grid_snr(self):
        with pytest.raises(ValueError):
            run_trial(SimConfig(**SMALL), 7.0, 0)

    def test_siso_high_snr_ber(self):
        # closed form at 30 dB is about 2.5e-4
        cfg = siso_bpsk(blocks=10_000, trials=1, snr_grid_db=(30.0,))
        c = run_trial(cfg, 30.0, 0)
        assert c.bits == 10_000
        assert c.bit_errors / c.bits < 1e-3

    def test_error_carries_context(self, monkeypatch):
        def broken(*args, **kwargs):
            raise DegenerateWeightsError("sum of weights is zero")

        monkeypatch.setattr(simulate, "despread", broken)
        with pytest.raises(SimulationError) as info:
            run_trial(SimConfig(**SMALL), 5.0, 7)
        err = info.value
        assert err.stage == "detect" and err.snr_db == 5.0 and "7" in str(err.trial)
        assert "detect" in str(err)


class TestReference:
    def test_examples(self):
        assert ber_reference_rayleigh(0.0) == pytest.approx(0.5 * (1 - math.sqrt(0.5)), rel=1e-12)
        assert ber_reference_rayleigh(0.0) == pytest.approx(0.14645, abs=1e-5)
        assert ber_reference_rayleigh(-200.0) == pytest.approx(0.5)

    def test_monotone(self):
        v = ber_reference_rayleigh(np.linspace(-10, 40, 51))
        assert np.all(np.diff(v) < 0)

    def test_siso_sim_matches_reference_at_low_snr(self):
        cfg = siso_bpsk(blocks=500, trials=40, snr_grid_db=(0.0, 10.0), master_seed=3)
        for rec in run_sweep(cfg):
            ref = ber_reference_rayleigh(rec.snr_db)
            # four binomial standard deviations
            assert abs(rec.ber - ref) < 4 * math.sqrt(ref * (1 - ref) / rec.bits)


@pytest.fixture(scope="module")
def records():
    return run_sweep(SimConfig(**SMALL, snr_grid_db=(0.0, 10.0, 20.0, 30.0)))


class TestSweep:
    def test_count_conservation(self, records):
        cfg = SimConfig(**SMALL).resolved()
        per_trial = run_trial(cfg, 0.0, 0)
        for r in records:
            assert r.trials == cfg.trials
            assert r.bits == per_trial.bits * cfg.trials
            assert r.symbols == per_trial.symbols * cfg.trials
            assert r.ber * r.bits == r.bit_errors
            assert r.ser * r.symbols == r.symbol_errors

    def test_sums_of_trials(self):
        cfg = SimConfig(**{**SMALL, "trials": 5}, snr_grid_db=(5.0,))
        rec = run_sweep(cfg)[0]
        parts = [run_trial(cfg, 5.0, t) for t in range(5)]
        assert rec.bit_errors == sum(p.bit_errors for p in parts)
        n_mat = sum(p.n_matrices for p in parts)
        assert rec.mse_ls_raw == pytest.approx(sum(p.sq_err_ls for p in parts) / n_mat, rel=1e-12)
        assert rec.mse_ls == pytest.approx(rec.mse_ls_raw / 4, rel=1e-12)

    def test_monotone_trend(self, records):
        for attr in ("mse_ls", "mse_mmse"):
            vals = [getattr(r, attr) for r in records]
            ses = [getattr(r, attr + "_se") for r in records]
            for a, b, sa, sb in zip(vals, vals[1:], ses, ses[1:]):
                assert b <= a + 2 * math.hypot(sa, sb)
        assert records[0].ber > records[-1].ber

    def test_theory_column(self, records):
        for r in records:
            assert r.mse_mmse == pytest.approx(r.mse_theory, rel=0.15)

    def test_thread_invariance(self):
        cfg = SimConfig(**{**SMALL, "trials": 70}, snr_grid_db=(0.0, 15.0))
        one = run_sweep(cfg, threads=1)
        four = run_sweep(cfg, threads=4)
        assert one == four

    def test_single_point_single_trial(self):
        cfg = SimConfig(**{**SMALL, "trials": 1}, snr_grid_db=(0.0,))
        recs = run_sweep(cfg)
        assert len(recs) == 1
        assert recs[0].trials == 1 and recs[0].bits == run_trial(cfg, 0.0, 0).bits
        assert math.isnan(recs[0].mse_ls_se)

    def test_disabled_estimator_is_nan(self):
        recs = run_sweep(SimConfig(**{**SMALL, "trials": 2}, estimator="ls", snr_grid_db=(0.0,)))
        assert math.isnan(recs[0].mse_mmse) and math.isnan(recs[0].mse_theory)

    def test_progress_callback(self):
        seen = []
        run_sweep(SimConfig(**{**SMALL, "trials": 2}, snr_grid_db=(0.0, 5.0)), progress=seen.append)
        assert [r.snr_db for r in seen] == [0.0, 5.0]

    @pytest.mark.parametrize("interp", ["linear", "dft"])
    def test_comb_pilots_run(self, interp):
        cfg = SimConfig(**{**SMALL, "trials": 8}, pilot="comb", n_pilots=4, interp=interp,
                        snr_grid_db=(math.inf,))
        rec = run_sweep(cfg)[0]
        if interp == "dft":
            # kept taps cover the channel, so noiseless DFT interpolation is exact
            assert rec.mse_ls < 1e-20
        assert rec.bits > 0

    def test_unnormalized(self):
        cfg = SimConfig(**{**SMALL, "trials": 4}, normalized_mse=False, snr_grid_db=(0.0,))
        rec = run_sweep(cfg)[0]
        assert rec.mse_ls == rec.mse_ls_raw
