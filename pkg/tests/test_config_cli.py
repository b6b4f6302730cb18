import json

import pytest

from mzeuler import integrate
from mzeuler.cli import EXIT_BLOWUP, EXIT_IO, EXIT_OK, EXIT_USAGE, build_parser, config_from_args, main
from mzeuler.config import (
    PRESETS, ConfigError, RunConfig, coerce, preset, read_config_file, write_config_file,
)
from mzeuler.diagnostics import CSV_HEADER, read_energy_csv


def parse(*argv):
    return config_from_args(build_parser().parse_args(["run", *argv]))


class TestConfig:
    def test_paper_order0_preset(self):
        c = parse("--preset", "paper-order0")
        assert (c.model, c.n, c.m_total, c.dt, c.t_end, c.t0) == ("order-0", 8, 16, 1e-3, 100.0, 2.0)
        assert (c.integrator, c.quadrature) == ("modified-euler", "trapezoid")
        assert c.output_dir == "runs/paper-order0"

    def test_order2_from_flags(self):
        c = parse("--model", "order-2", "--t0", "1")
        assert c.model == "order-2" and c.t0 == 1.0 and c.n == 8 and c.dt == 1e-3
        assert c.output_dir == "runs/order-2"

    def test_t0_not_multiple(self):
        with pytest.raises(ConfigError, match="multiple"):
            parse("--t0", "0.0015", "--dt", "1e-3")

    def test_untruncated_t0(self):
        assert parse("--model", "order-1", "--t0", "inf").t0 is None

    @pytest.mark.parametrize("kw", [
        dict(model="order-9"), dict(model="nope"), dict(n=5), dict(m=10), dict(dt=-1.0),
        dict(t_end=0.0105), dict(integrator="euler"), dict(quadrature="simpson"),
        dict(record_interval=0), dict(fit_window=(5.0, 1.0)), dict(threads=0),
        dict(blowup_factor=1.0), dict(n=2, m=4), dict(initial="vortex"),
    ])
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw).validate()

    def test_every_preset_valid(self):
        for name in PRESETS:
            c = preset(name)
            assert c.preset == name

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("paper-order7")

    def test_dict_round_trip(self):
        c = preset("desk-check")
        assert RunConfig.from_dict(c.to_dict()).to_dict() == c.to_dict()

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"modle": "order-0"})

    def test_file_round_trip(self, tmp_path):
        c = preset("paper-order1", output_dir="x", extra={"note": "hi"})
        write_config_file(c, tmp_path / "c.cfg")
        back = RunConfig.from_dict(read_config_file(tmp_path / "c.cfg"))
        assert back.to_dict() == c.to_dict()

    def test_file_errors(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("model order-0\n")
        with pytest.raises(ConfigError, match="key = value"):
            read_config_file(p)
        p.write_text("# comment\nspeed = 3\n")
        with pytest.raises(ConfigError):
            read_config_file(p)

    def test_coerce(self):
        assert coerce("t0", "none") is None
        assert coerce("fit_window", "1, 2") == (1.0, 2.0)
        assert coerce("project_divergence", "yes") is True
        with pytest.raises(ConfigError):
            coerce("n", "eight")
        with pytest.raises(ConfigError):
            coerce("m", "inf")


class TestCLI:
    def test_run_desk_check(self, tmp_path, capsys):
        out = tmp_path / "desk"
        code = main(["run", "--preset", "desk-check", "--t-end", "0.2", "--out", str(out)])
        assert code == EXIT_OK
        assert "slope" in capsys.readouterr().out
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["preset"] == "desk-check" and man["t0"] == 2.0
        assert man["fit"]["points"] >= 10 and man["blowup"] is None
        assert (out / "energy.csv").read_text().splitlines()[0] == ",".join(CSV_HEADER)

    def test_rerun_from_manifest_is_bitwise(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--preset", "desk-check", "--t-end", "0.05", "--fit-window", "0.01",
                     "0.05", "--out", str(a)]) == EXIT_OK
        assert main(["run", "--from-manifest", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
        assert (a / "energy.csv").read_bytes() == (b / "energy.csv").read_bytes()

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("model = galerkin-resolved\nn = 4\nt_end = 0.02\nfit_window = 0.01 0.02\n"
                       "record_interval = 1\n")
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        recs = read_energy_csv(out / "energy.csv")
        assert len(recs) == 21 and recs[0].rms == ()

    def test_bad_config_is_usage_error(self, capsys):
        assert main(["run", "--model", "order-0", "--t0", "0.0015"]) == EXIT_USAGE
        assert "not an integer multiple" in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = main(["run", "--preset", "desk-check", "--t-end", "0.01", "--out", str(blocker / "x")])
        assert code == EXIT_IO
        assert str(blocker) in capsys.readouterr().err

    def test_blowup_exit_status(self, tmp_path, monkeypatch, capsys):
        real = integrate.STEPPERS["modified-euler"]

        def inflating(state, rhs, dt, **kw):
            new, f = real(state, rhs, dt, **kw)
            new.u = 3 * new.u
            return new, f

        monkeypatch.setitem(integrate.STEPPERS, "modified-euler", inflating)
        out = tmp_path / "b"
        code = main(["run", "--preset", "desk-check", "--out", str(out)])
        assert code == EXIT_BLOWUP
        assert "blow-up at t=0.0040" in capsys.readouterr().out
        man = json.loads((out / "manifest.json").read_text())
        assert man["blowup"]["step"] == 4 and man["first_energy_increase"] == 0.001
        assert len(read_energy_csv(out / "energy.csv")) >= 1

    def test_show_terms(self, capsys):
        for n, count in ((0, 2), (1, 4), (2, 12)):
            assert main(["show-terms", str(n)]) == EXIT_OK
            text = capsys.readouterr().out
            assert text.startswith(f"Z{n}: {count} bilinear sums on F")
            assert f"expected {n + 3}" in text
        main(["show-terms", "2", "--plan"])
        text = capsys.readouterr().out
        assert "type i: 64, type ii: 36, type iii: 32" in text
        assert "# input u; output Z2 on F" in text

    def test_show_terms_budget(self, capsys):
        assert main(["show-terms", "5"]) != EXIT_OK
        assert "order bound" in capsys.readouterr().err

    def test_presets_listing(self, capsys):
        assert main(["presets"]) == EXIT_OK
        assert "paper-order2" in capsys.readouterr().out

    def test_missing_command(self):
        with pytest.raises(SystemExit):
            main([])
