import subprocess
import sys
from dataclasses import fields

import pytest

from mccdma.cli import CSV_HEADER, RunManifest, format_csv, main, parse_config, parse_snr_grid, write_csv
from mccdma.exceptions import BadValueError, IoFailureError, MissingRequiredError, UnknownKeyError
from mccdma.simulate import SimConfig, run_sweep

FAST = ["--trials", "3", "--snr", "0:10:20", "--set", "pg=8", "--set", "users=2"]


def data_rows(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


class TestParseConfig:
    @pytest.mark.parametrize(
        "preset, expected", [("fig4", (2, 2, 32)), ("fig5", (2, 2, 16)), ("fig6", (2, 3, 32)), ("fig7", (2, 4, 32))]
    )
    def test_presets(self, preset, expected):
        cfg = parse_config(preset=preset)
        assert (cfg.n_t, cfg.n_r, cfg.pg) == expected

    def test_fig8_uses_mmse(self):
        cfg = parse_config(preset="fig8")
        assert cfg.estimator == "mmse" and (cfg.n_t, cfg.n_r, cfg.pg) == (2, 2, 32)

    def test_file_and_override_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nn_t = 2\nn_r=3\npg = 16\ntrials = 7\n\nscheme = bpsk\n")
        cfg = parse_config(path, {"trials": "9"})
        assert (cfg.n_r, cfg.pg, cfg.trials, cfg.scheme) == (3, 16, 9, "bpsk")

    def test_negative_receive_antennas(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("n_t=2\nn_r = -1\npg=32\n")
        with pytest.raises(BadValueError, match="n_r.*integer >= 1"):
            parse_config(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("n_t=2\nn_r=2\npg=32\nfoo=1\n")
        with pytest.raises(UnknownKeyError, match="foo"):
            parse_config(path)

    def test_missing_required(self):
        with pytest.raises(MissingRequiredError, match="pg"):
            parse_config(overrides={"n_t": "2", "n_r": "2"})

    @pytest.mark.parametrize("key, raw", [("scheme", "16qam"), ("spatial_correlation", "1.5"), ("pg", "abc"), ("snr_grid_db", "5:0:10")])
    def test_bad_values(self, key, raw):
        with pytest.raises(BadValueError, match=key):
            parse_config(overrides={"n_t": "2", "n_r": "2", "pg": "32", key: raw})

    def test_cross_field_violation(self):
        with pytest.raises(BadValueError):
            parse_config(overrides={"n_t": "2", "n_r": "2", "pg": "12"})

    def test_snr_grid(self):
        assert parse_snr_grid("0:5:30") == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
        assert parse_snr_grid("3, 7.5") == (3.0, 7.5)


@pytest.fixture(scope="module")
def setup():
    cfg = SimConfig(n_t=2, n_r=2, pg=8, users=2, trials=2, estimator="mmse", snr_grid_db=(0.0,)).resolved()
    return cfg, run_sweep(cfg)


class TestCsv:
    def test_layout(self, setup, tmp_path):
        cfg, recs = setup
        out = tmp_path / "o.csv"
        write_csv(recs, RunManifest(cfg, timestamp="t0"), out)
        lines = out.read_text(encoding="utf-8").splitlines()
        comments = [l for l in lines if l.startswith("#")]
        assert "# master_seed=0" in comments and "# timestamp=t0" in comments
        rows = data_rows(out)
        assert rows[0] == CSV_HEADER
        assert len(rows) == 2
        fields_ = rows[1].split(",")
        assert len(fields_) == len(CSV_HEADER.split(","))
        assert fields_[1] == "nan"
        assert float(fields_[3]) == recs[0].mse_theory

    def test_shortest_roundtrip_floats(self, setup):
        cfg, recs = setup
        row = format_csv(recs, RunManifest(cfg)).splitlines()[-1].split(",")
        assert float(row[2]) == recs[0].mse_mmse
        assert row[2] == repr(recs[0].mse_mmse)

    def test_empty_records(self, setup):
        with pytest.raises(ValueError):
            format_csv([], RunManifest(setup[0]))

    def test_io_failure(self, setup, tmp_path):
        cfg, recs = setup
        with pytest.raises(IoFailureError):
            write_csv(recs, RunManifest(cfg), tmp_path / "missing" / "o.csv")

    def test_manifest_round_trip(self, setup, tmp_path):
        cfg, recs = setup
        cfg = SimConfig(**{**cfg.as_dict(), "decay": 0.3, "spatial_correlation": 0.25, "snr_grid_db": (0.1, 2.5)}).resolved()
        out = tmp_path / "m.csv"
        write_csv(recs, RunManifest(cfg, preset="fig4"), out)
        again = parse_config(out)
        for f in fields(SimConfig):
            assert getattr(again, f.name) == getattr(cfg, f.name), f.name
        assert again == cfg


class TestCommands:
    def test_sweep_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "fig4.csv"
        assert main(["sweep", "--preset", "fig4", "--seed", "42", "--out", str(out), *FAST]) == 0
        rows = data_rows(out)
        assert rows[0] == CSV_HEADER and len(rows) == 4
        assert "# preset=fig4" in out.read_text()
        assert "snr=0 dB" in capsys.readouterr().err

    def test_rerun_from_manifest_identical(self, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        assert main(["sweep", "--preset", "fig5", "--seed", "5", "--out", str(first), *FAST]) == 0
        assert main(["sweep", "--config", str(first), "--out", str(second)]) == 0
        strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("# timestamp=")]
        assert strip(first) == strip(second)

    def test_sweep_to_stdout(self, capsys):
        assert main(["sweep", "--preset", "fig4", *FAST, "--estimator", "ls"]) == 0
        text = capsys.readouterr().out
        assert CSV_HEADER in text
        assert text.splitlines()[-1].split(",")[2] == "nan"

    def test_comb_flags(self, tmp_path):
        out = tmp_path / "c.csv"
        argv = ["sweep", "--preset", "fig4", *FAST, "--pilot", "comb", "--np", "4", "--interp", "dft", "--out", str(out)]
        assert main(argv) == 0
        text = out.read_text()
        assert "# pilot=comb" in text and "# n_pilots=4" in text and "# interp=dft" in text

    def test_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("n_t=2\nn_r=-1\npg=32\n")
        assert main(["sweep", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("mccdma: error:") and "n_r" in err[0]

    def test_missing_required_exit(self, capsys):
        assert main(["sweep", "--set", "n_t=2"]) != 0
        assert "missing" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["plot"])
        assert info.value.code != 0
        assert "usage" in capsys.readouterr().err

    def test_presets_listing(self, capsys):
        assert main(["presets"]) == 0
        out = capsys.readouterr().out
        assert "[fig4] n_t=2, n_r=2, pg=32" in out
        assert "[fig5] n_t=2, n_r=2, pg=16" in out
        assert "[fig6] n_t=2, n_r=3" in out and "[fig7] n_t=2, n_r=4" in out
        assert "[fig8]" in out

    def test_codes_report(self, capsys):
        assert main(["codes-report"]) == 0
        out = capsys.readouterr().out
        assert "mseq" in out and "walsh" in out

    def test_selftest(self, capsys):
        assert main(["selftest"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_selftest_failure_exit(self, monkeypatch):
        from mccdma import selftest

        def bad():
            raise AssertionError("forced")

        monkeypatch.setattr(selftest, "CHECKS", [("forced", bad)])
        assert main(["selftest"]) == 1

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "mccdma", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0 and "0.1.0" in proc.stdout
