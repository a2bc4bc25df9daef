import csv
import json


from rewet.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main


def run(*argv):
    return main([str(a) for a in argv])


class TestRun:
    def test_set_overrides_equal_preset(self, tmp_path):
        assert run("run", "--preset", "no_reaction", "--out", tmp_path / "a") == EXIT_OK
        assert run("run", "--set", "k_alpha=0", "--set", "k_beta=0", "--set", "k_prec=0",
                   "--out", tmp_path / "b") == EXIT_OK
        for name in ("profiles.csv", "front.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        sa = json.loads((tmp_path / "a" / "summary.json").read_text())
        sb = json.loads((tmp_path / "b" / "summary.json").read_text())
        sa.pop("metadata"), sb.pop("metadata")
        assert sa == sb
        assert sa["fit_r2"] is not None

    def test_dump_config_round_trip(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        args = ("--preset", "mixture2", "--set", "k_diss=1", "--grid", "40", "--t-end", "5")
        assert run("run", *args, "--dump-config", cfg) == EXIT_OK
        assert run("run", "--config", cfg, "--out", tmp_path / "a") == EXIT_OK
        assert run("run", *args, "--out", tmp_path / "b") == EXIT_OK
        for name in ("profiles.csv", "front.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        rows = list(csv.reader(open(tmp_path / "a" / "profiles.csv")))
        assert len(rows) == 1 + 10 * 40

    def test_merge_order(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("k_alpha=1.0\nk_beta=2.0\n")
        assert run("run", "--config", cfg, "--set", "k_alpha=3", "--dump-config", "-") == EXIT_OK
        out = capsys.readouterr().out
        assert "k_alpha=3.0\n" in out and "k_beta=2.0\n" in out

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("k_alpha=1\nnonsense=2\n")
        assert run("run", "--config", cfg) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "line 2" in err and "nonsense" in err

    def test_unknown_preset(self):
        assert run("run", "--preset", "concrete", "--dump-config", "-") == EXIT_CONFIG

    def test_missing_config_is_io_error(self, tmp_path):
        assert run("run", "--config", tmp_path / "absent.txt") == EXIT_IO

    def test_solver_failure_exit(self, tmp_path):
        assert run("run", "--rtol", "1e-30", "--atol", "1e-30", "--t-end", "0.01", "--grid", "10",
                   "--out", tmp_path) == EXIT_SOLVER


class TestSweep:
    def test_campaign_file(self, tmp_path):
        camp = tmp_path / "c.ini"
        camp.write_text("[campaign]\nsweep_key=k_alpha\n[scenario ref]\n[scenario ka0]\nk_alpha=0\n"
                        "[scenario short]\nt_end=1\n")
        assert run("sweep", camp, "--grid", "20", "--t-end", "2", "--out", tmp_path / "o") == EXIT_OK
        rows = list(csv.reader(open(tmp_path / "o" / "comparison.csv")))
        assert rows[0] == ["scenario", "param_value", "s_final_cm", "theta_min_final", "phi_min_final",
                           "runtime_s"]
        assert [r[0] for r in rows[1:]] == ["ref", "ka0", "short"]
        assert float(rows[2][1]) == 0.0
        assert (tmp_path / "o" / "ka0" / "front.csv").exists()

    def test_empty_campaign(self, tmp_path):
        camp = tmp_path / "e.ini"
        camp.write_text("[campaign]\nname=nothing\n")
        assert run("sweep", camp, "--out", tmp_path / "o") == EXIT_CONFIG

    def test_failed_scenario_sets_exit(self, tmp_path):
        camp = tmp_path / "f.ini"
        camp.write_text("[scenario good]\n[scenario hopeless]\nrtol=1e-30\natol=1e-30\n")
        assert run("sweep", camp, "--grid", "10", "--t-end", "0.01", "--out", tmp_path / "o") == EXIT_SOLVER
        fails = list(csv.reader(open(tmp_path / "o" / "failures.csv")))
        assert fails[1][0] == "hopeless"

    def test_builtin_study(self, tmp_path):
        assert run("sweep", "--study", "k_alpha", "--grid", "20", "--t-end", "1", "--out", tmp_path) == EXIT_OK
        rows = list(csv.reader(open(tmp_path / "comparison.csv")))
        assert [float(r[1]) for r in rows[1:]] == [0.0, 0.1, 1.0, 10.0]

    def test_mixture_study_echoes_porosity(self, tmp_path):
        assert run("sweep", "--study", "mixtures", "--grid", "20", "--t-end", "1", "--out", tmp_path) == EXIT_OK
        rows = list(csv.reader(open(tmp_path / "comparison.csv")))
        assert [float(r[1]) for r in rows[1:]] == [0.113, 0.074, 0.066, 0.045]


class TestRefine:
    def test_table(self, tmp_path):
        assert run("refine", "--grids", "10", "20", "40", "--t-end", "1", "--out", tmp_path) == EXIT_OK
        rows = list(csv.reader(open(tmp_path / "convergence.csv")))
        assert rows[0] == ["N", "l2_error", "ratio", "order"]
        assert len(rows) == 4
        assert rows[-1][2:] == ["", ""]
        float(rows[1][3])

    def test_bad_grids(self, tmp_path):
        assert run("refine", "--grids", "30", "20", "--out", tmp_path) == EXIT_CONFIG


def test_presets(capsys):
    assert run("presets") == EXIT_OK
    out = capsys.readouterr().out
    assert "mixture4" in out and "relaxed_cutoff" in out
