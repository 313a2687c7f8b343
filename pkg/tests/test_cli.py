"""Tests for the batch command-line front end: config resolution, output
formats, determinism, and exit codes."""

import json

import numpy as np
import pytest

import widthlab.berger as berger
import widthlab.cli as cli
import widthlab.conformal as cf
import widthlab.equidist as eq


@pytest.fixture
def round_profile_path(tmp_path):
    path = str(tmp_path / "round.json")
    cf.save_profile(cf.AxisymProfile.round_profile(61), path)
    return path


@pytest.fixture
def bump_profile_path(tmp_path):
    path = str(tmp_path / "bump.json")
    cf.save_profile(
        cf.AxisymProfile.from_function(lambda t: 1.0 + 0.3 * np.cos(t), 201), path
    )
    return path


@pytest.fixture
def member_instance_path(tmp_path):
    path = str(tmp_path / "member.json")
    eq.save_instance(
        path,
        eq.FiniteMeasure(np.array([1.0, 1.0])),
        eq.MeasureFamily(
            members=(
                eq.FiniteMeasure(np.array([1.0, 0.0])),
                eq.FiniteMeasure(np.array([0.0, 1.0])),
            )
        ),
    )
    return path


@pytest.fixture
def nonmember_instance_path(tmp_path):
    path = str(tmp_path / "nonmember.json")
    eq.save_instance(
        path,
        eq.FiniteMeasure(np.array([1.0, 2.0])),
        eq.MeasureFamily(members=(eq.FiniteMeasure(np.array([1.0, 1.0])),)),
    )
    return path


class TestArgumentHandling:
    def test_unknown_command_exits_one(self, capsys):
        assert cli.main(["no-such-command"]) == 1

    def test_no_command_prints_usage(self, capsys):
        assert cli.main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert cli.main(["--help"]) == 0

    def test_missing_required_input(self, capsys):
        assert cli.main(["equidist-check"]) == 1
        assert "input" in capsys.readouterr().err

    def test_unreadable_input(self, tmp_path, capsys):
        out = str(tmp_path / "c.json")
        code = cli.main(
            ["equidist-check", "--input", str(tmp_path / "nope.json"), "--output", out]
        )
        assert code == 1

    def test_run_config_validation(self):
        with pytest.raises(ValueError, match="unknown command"):
            cli.RunConfig(command="zap", output_path="x.json")
        with pytest.raises(ValueError, match="threads"):
            cli.RunConfig(command="roundcheck", output_path="x.json", threads=0)
        with pytest.raises(ValueError, match="input"):
            cli.RunConfig(command="equidist-check", output_path="x.json")

    def test_config_file_and_flag_precedence(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"rho_min": 0.5, "rho_max": 2.0, "n": 4}))
        code = cli.main(
            ["berger-scan", "--config", str(cfg_path), "--n", "6", "--output", "s.csv"]
        )
        assert code == 0
        meta = json.loads((tmp_path / "s.csv.meta.json").read_text())
        # Flag overrides the file; file overrides the default.
        assert meta["config"]["n"] == 6
        assert meta["config"]["rho_min"] == 0.5

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus": 1}))
        assert cli.main(["berger-scan", "--config", str(cfg_path)]) == 1
        assert "bogus" in capsys.readouterr().err

    def test_threads_env(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("WIDTHLAB_THREADS", "3")
        out = str(tmp_path / "s.csv")
        code = cli.main(
            ["berger-scan", "--rho-min", "0.5", "--rho-max", "2", "--n", "4",
             "--output", out]
        )
        assert code == 0
        meta = json.loads(open(out + ".meta.json").read())
        assert meta["config"]["threads"] == 3

    def test_bad_threads_env(self, monkeypatch, capsys):
        monkeypatch.setenv("WIDTHLAB_THREADS", "minus-two")
        assert cli.main(["roundcheck"]) == 1
        assert "WIDTHLAB_THREADS" in capsys.readouterr().err


class TestBergerScan:
    def test_spec_example_flags(self, tmp_path, capsys):
        out = str(tmp_path / "scan.csv")
        code = cli.main(
            ["berger-scan", "--rho-min", "1e-3", "--rho-max", "1e4", "--n", "50",
             "--output", out]
        )
        assert code == 0
        lines = open(out).read().strip().split("\n")
        assert lines[0].startswith("rho,")
        assert len(lines) == 51
        # Round-trip: the reader re-validates every row's internal invariants.
        reports = berger.read_scan_csv(out)
        assert len(reports) == 50
        assert reports[0].rho == pytest.approx(1e-3)
        meta = json.loads(open(out + ".meta.json").read())
        assert meta["format"] == "widthlab-report/1"
        assert meta["config"]["command"] == "berger-scan"
        assert meta["config"]["n"] == 50


class TestBergerCertify:
    def test_certificates(self, tmp_path):
        out = str(tmp_path / "cert.json")
        code = cli.main(
            ["berger-certify", "--h", "1e-2", "--grid-n", "30", "--output", out]
        )
        assert code == 0
        data = json.loads(open(out).read())
        assert data["format"] == "widthlab-report/1"
        assert data["local_min"]["passed"] is True
        assert data["local_min"]["second_difference"] > 0.0
        assert data["product_bound"]["all_below_bound"] is True
        assert data["product_bound"]["max_product"] <= 24.0 * np.pi + 1e-4


class TestConformalAnalyze:
    def test_bump_report(self, tmp_path, bump_profile_path):
        out = str(tmp_path / "ana.json")
        code = cli.main(["conformal-analyze", "--input", bump_profile_path,
                         "--output", out])
        assert code == 0
        data = json.loads(open(out).read())
        assert data["format"] == "widthlab-report/1"
        profile = cf.load_profile(bump_profile_path)
        assert data["volume"] == pytest.approx(cf.volume(profile), rel=1e-12)
        assert len(data["minimal_spheres"]) == 1
        sphere = data["minimal_spheres"][0]
        assert sphere["theta"] == pytest.approx(1.1240721, abs=1e-3)
        assert sphere["index"] == 4 and sphere["nullity"] == 0
        assert data["star_holds_on_axisym_candidates"] is True
        assert data["isoperimetric"]["passed"] is False


class TestYamabeRun:
    def test_round_profile_converges(self, tmp_path, round_profile_path, capsys):
        out = str(tmp_path / "flow.json")
        code = cli.main(["yamabe-run", "--profile", round_profile_path,
                         "--t-end", "1", "--output", out])
        assert code == 0
        data = json.loads(open(out).read())
        assert data["format"] == "widthlab-report/1"
        assert data["status"] == "converged"
        assert data["config"]["t_end"] == 1.0
        assert "converged" in capsys.readouterr().out

    def test_trace_csv_with_sidecar(self, tmp_path, round_profile_path):
        out = str(tmp_path / "flow.json")
        trace = str(tmp_path / "trace.csv")
        code = cli.main(["yamabe-run", "--profile", round_profile_path,
                         "--t-end", "0.001", "--output", out, "--trace-csv", trace])
        assert code == 0
        lines = open(trace).read().strip().split("\n")
        assert lines[0].startswith("t,")
        meta = json.loads(open(trace + ".meta.json").read())
        assert meta["config"]["command"] == "yamabe-run"

    def test_substep_cap_is_numerical_failure(self, tmp_path, capsys):
        path = str(tmp_path / "thin.json")
        cf.save_profile(
            cf.AxisymProfile.from_function(lambda t: 0.05 * np.ones_like(t), 11), path
        )
        out = str(tmp_path / "flow.json")
        code = cli.main(["yamabe-run", "--profile", path, "--t-end", "5",
                         "--dt", "5", "--output", out])
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err


class TestEquidistCommands:
    def test_check_member(self, tmp_path, member_instance_path):
        out = str(tmp_path / "cert.json")
        code = cli.main(["equidist-check", "--input", member_instance_path,
                         "--output", out])
        assert code == 0
        data = json.loads(open(out).read())
        assert data["verdict"] == "member"
        assert data["separating_f"] is None
        assert data["config"]["tol"] == 1e-9

    def test_check_non_member(self, tmp_path, nonmember_instance_path):
        out = str(tmp_path / "cert.json")
        code = cli.main(["equidist-check", "--input", nonmember_instance_path,
                         "--output", out])
        assert code == 0
        data = json.loads(open(out).read())
        assert data["verdict"] == "non_member"
        assert len(data["separating_f"]) == 2

    def test_sequence_trace(self, tmp_path, member_instance_path):
        out = str(tmp_path / "trace.csv")
        code = cli.main(["equidist-sequence", "--input", member_instance_path,
                         "--k-max", "200", "--output", out])
        assert code == 0
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "k,error"
        assert len(lines) == 201

    def test_sequence_weighted(self, tmp_path):
        path = str(tmp_path / "structured.json")
        base = (eq.FiniteMeasure(np.array([2.0, 0.0])),
                eq.FiniteMeasure(np.array([0.0, 1.0])))
        eq.save_instance(
            path,
            eq.FiniteMeasure(np.array([2.0, 1.0])),
            eq.MeasureFamily(
                members=base,
                structure=eq.FamilyStructure(
                    base=base, multiplicity_bound=2, mass_bounds=(1.0, 2.0)
                ),
            ),
        )
        out = str(tmp_path / "trace.csv")
        code = cli.main(["equidist-sequence", "--input", path, "--weighted",
                         "--k-max", "100", "--output", out])
        assert code == 0
        meta = json.loads(open(out + ".meta.json").read())
        assert meta["config"]["weighted"] is True

    def test_sequence_rejects_non_member(self, tmp_path, nonmember_instance_path,
                                         capsys):
        out = str(tmp_path / "trace.csv")
        code = cli.main(["equidist-sequence", "--input", nonmember_instance_path,
                         "--k-max", "10", "--output", out])
        assert code == 1
        assert "cone_hull_membership" in capsys.readouterr().err


class TestRoundcheck:
    def test_all_items_pass(self, tmp_path, capsys):
        out = str(tmp_path / "rc.json")
        code = cli.main(["roundcheck", "--output", out])
        assert code == 0
        printed = capsys.readouterr().out
        assert printed.count("PASS") == 4 and "FAIL" not in printed
        data = json.loads(open(out).read())
        assert data["passed"] is True
        assert [i["name"] for i in data["items"]] == [
            "berger-round-width",
            "conformal-round-geometry",
            "yamabe-round-stationary",
            "equidist-trivial-instances",
        ]

    def test_report_object(self):
        report = cli.roundcheck()
        assert report.passed
        assert len(report.items) == 4


class TestDeterminism:
    def test_repeat_runs_byte_identical(self, tmp_path, round_profile_path):
        out = str(tmp_path / "flow.json")
        assert cli.main(["yamabe-run", "--profile", round_profile_path,
                         "--t-end", "0.002", "--output", out]) == 0
        first = open(out, "rb").read()
        assert cli.main(["yamabe-run", "--profile", round_profile_path,
                         "--t-end", "0.002", "--output", out]) == 0
        assert open(out, "rb").read() == first

    def test_scan_byte_identical(self, tmp_path):
        out = str(tmp_path / "s.csv")
        args = ["berger-scan", "--rho-min", "0.5", "--rho-max", "2.0", "--n", "5",
                "--output", out]
        assert cli.main(args) == 0
        first = open(out, "rb").read()
        first_meta = open(out + ".meta.json", "rb").read()
        assert cli.main(args) == 0
        assert open(out, "rb").read() == first
        assert open(out + ".meta.json", "rb").read() == first_meta
