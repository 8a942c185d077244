import json
import math
import os
import shutil

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swapcert import cli, sdp
from swapcert.config import RunConfig, parse_config, resolve_config
from swapcert.dataio import data_from_json, data_to_json, dumps_data, read_data, write_data
from swapcert.errors import ValidationError
from swapcert.pipeline import config_from_report, simulate_data, theta_seed, verify
from swapcert.report import FIDELITY_COLUMNS, read_csv, read_report

RUN_ARGS = ["--theta", "40,45", "--trials", "300", "--seed", "7", "--eps-grid", "0,0.1"]
REPORT_FILES = ("report.json", "report.csv", "fidelities.csv", "violation.csv", "robust_curves.csv")


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """Two identical runs in different directories and one with two workers."""
    base = tmp_path_factory.mktemp("runs")
    dirs = {k: str(base / k) for k in ("a", "b", "w2")}
    assert cli.main(["report", *RUN_ARGS, "--out", dirs["a"]]) == 0
    assert cli.main(["report", *RUN_ARGS, "--out", dirs["b"]]) == 0
    assert cli.main(["report", *RUN_ARGS, "--workers", "2", "--out", dirs["w2"]]) == 0
    return dirs


class TestConfig:
    def test_grammar(self):
        text = """
        # a comment
        thetas_deg = 30, 45   # trailing comment
        infinite_sample = yes
        input_dir = none
        trials_per_setting = 1000
        """
        values = parse_config(text)
        assert values == {"thetas_deg": (30.0, 45.0), "infinite_sample": True, "input_dir": None,
                          "trials_per_setting": 1000}

    @pytest.mark.parametrize("text, msg", [
        ("nonsense = 1", "unknown key"),
        ("seed = 1\nseed = 2", "repeated"),
        ("seed = one", "cannot parse"),
        ("infinite_sample = maybe", "cannot parse"),
        ("just words", "key = value"),
    ])
    def test_errors(self, text, msg):
        with pytest.raises(ValidationError, match=msg):
            parse_config(text)

    def test_overrides_win(self):
        cfg = resolve_config("seed = 3\ntrials_per_setting = 10", {"seed": "9"})
        assert cfg.seed == 9 and cfg.trials_per_setting == 10

    @pytest.mark.parametrize("kwargs", [
        {"thetas_deg": (50.0,)}, {"thetas_deg": (30.0, 30.0)}, {"trials_per_setting": 0},
        {"depolarizing_p": 1.5}, {"mode": "ingest"}, {"eps_grid": (-0.1,)}, {"offsets_a_deg": (1.0,)},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            RunConfig(**kwargs)

    @given(st.integers(0, 10 ** 6), st.booleans(), st.floats(0, 1),
           st.lists(st.sampled_from([30.0, 32.5, 35.0, 40.0, 45.0]), min_size=1, max_size=5, unique=True))
    def test_text_round_trip(self, seed, exact, p, thetas):
        cfg = RunConfig(seed=seed, infinite_sample=exact, depolarizing_p=p, thetas_deg=tuple(thetas))
        assert resolve_config(cfg.to_text()) == cfg


class TestDataFiles:
    def test_round_trip_counts(self):
        d = simulate_data(RunConfig(trials_per_setting=50, seed=1), 35.0)
        back = data_from_json(json.loads(dumps_data(d)))
        assert back.selftest == d.selftest and back.tomo == d.tomo
        assert dumps_data(back) == dumps_data(d)

    def test_round_trip_exact(self):
        d = simulate_data(RunConfig(infinite_sample=True), 35.0)
        back = data_from_json(json.loads(dumps_data(d)))
        assert np.array_equal(back.exact_behavior.p, d.exact_behavior.p)
        assert np.array_equal(back.exact_tomo, d.exact_tomo)

    def doc(self):
        return data_to_json(simulate_data(RunConfig(trials_per_setting=20, seed=2), 40.0))

    def test_unicode_minus(self):
        doc = self.doc()
        cells = doc["selftest_settings"][0]["counts"]
        doc["selftest_settings"][0]["counts"] = {k.replace("-", "−"): v for k, v in cells.items()}
        assert data_from_json(doc).selftest.n.sum() == 80

    @pytest.mark.parametrize("mutate, msg", [
        (lambda d: d["selftest_settings"].pop(), "four"),
        (lambda d: d["tomo_settings"].pop(), "nine"),
        (lambda d: d["selftest_settings"][1].update(x=0, y=0), "repeated"),
        (lambda d: d["tomo_settings"][0].update(basis="xq"), "basis"),
        (lambda d: d["selftest_settings"][0]["counts"].update({"++": -1}), "nonnegative"),
        (lambda d: d["selftest_settings"][0]["counts"].update({"++": True}), "nonnegative"),
        (lambda d: d["selftest_settings"][0]["counts"].update({"++": 10 ** 6}), "trials_per_setting"),
        (lambda d: d["selftest_settings"][0]["counts"].pop("+-"), "keys"),
        (lambda d: d.pop("metadata"), "metadata"),
    ])
    def test_invalid(self, mutate, msg):
        doc = self.doc()
        mutate(doc)
        with pytest.raises(ValidationError, match=msg):
            data_from_json(doc)

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError, match="not valid JSON"):
            read_data(str(path))

    def test_theta_seeds_differ(self):
        seeds = {theta_seed(0, t) for t in (30.0, 32.5, 35.0, 37.5, 40.0, 42.5, 45.0)}
        assert len(seeds) == 7 and theta_seed(0, 30.0) == theta_seed(0, 30.0)


class TestReports:
    def test_byte_identical(self, runs):
        for name in REPORT_FILES:
            with open(os.path.join(runs["a"], name), "rb") as fa, open(os.path.join(runs["b"], name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_workers_do_not_change_results(self, runs):
        for name in REPORT_FILES[1:]:
            with open(os.path.join(runs["a"], name)) as fa, open(os.path.join(runs["w2"], name)) as fb:
                assert fa.read() == fb.read(), name
        assert read_report(runs["w2"]).config["workers"] == 2

    def test_contents(self, runs):
        rep = read_report(runs["a"])
        assert [r.theta_deg for r in rep.rows] == [40.0, 45.0]
        for r in rep.rows:
            assert 0 <= r.f_s <= 1 and 0 <= r.f_t <= 1
            assert r.ratio == r.f_s / r.f_t
            assert r.data_file and os.path.exists(os.path.join(runs["a"], r.data_file))
        assert rep.aggregate["mean_ratio"] == pytest.approx(np.mean([r.ratio for r in rep.rows]))
        assert rep.conventions["epsilon_constraint"] == ">="
        assert "out_dir" not in rep.config
        fid = read_csv(os.path.join(runs["a"], "fidelities.csv"), FIDELITY_COLUMNS)
        assert [row["f_s"] for row in fid] == [r.f_s for r in rep.rows]

    def test_verify_clean_and_relocated(self, runs, tmp_path, capsys):
        assert verify(runs["a"]) == []
        moved = str(tmp_path / "moved")
        shutil.copytree(runs["a"], moved)
        assert cli.main(["verify", "--out", moved]) == 0
        assert "verified" in capsys.readouterr().out
        assert config_from_report(moved).out_dir == moved

    def test_verify_detects_tampering(self, runs, tmp_path, capsys):
        moved = str(tmp_path / "tampered")
        shutil.copytree(runs["a"], moved)
        path = os.path.join(moved, "report.json")
        with open(path) as fh:
            doc = json.load(fh)
        doc["rows"][0]["f_s"] += 0.01
        with open(path, "w") as fh:
            json.dump(doc, fh)
        assert cli.main(["verify", "--out", moved]) == 2
        assert "MISMATCH" in capsys.readouterr().out

    def test_verify_detects_changed_data(self, runs, tmp_path):
        moved = str(tmp_path / "data-changed")
        shutil.copytree(runs["a"], moved)
        row = read_report(moved).rows[0]
        path = os.path.join(moved, row.data_file)
        with open(path) as fh:
            doc = json.load(fh)
        cells = doc["selftest_settings"][0]["counts"]
        cells["++"] += 1
        cells["--"] -= 1
        with open(path, "w") as fh:
            json.dump(doc, fh)
        assert any("I_value" in msg for msg in verify(moved))

    def test_ingest_reproduces_rows(self, runs, tmp_path):
        out = str(tmp_path / "ingest")
        assert cli.main(["report", "--input", os.path.join(runs["a"], "data"), "--eps-grid", "",
                         "--out", out]) == 0
        a, b = read_report(runs["a"]), read_report(out)
        assert [r.f_s for r in a.rows] == [r.f_s for r in b.rows]
        assert [r.f_t for r in a.rows] == [r.f_t for r in b.rows]


class TestCommands:
    def test_simulate_writes_files(self, tmp_path, capsys):
        assert cli.main(["simulate", "--theta", "30,45", "--trials", "10", "--out", str(tmp_path)]) == 0
        files = sorted(os.listdir(tmp_path / "data"))
        assert files == ["theta_30.json", "theta_45.json"]
        assert read_data(str(tmp_path / "data" / "theta_45.json")).trials_per_setting == 10

    def test_tomo_and_certify(self, tmp_path, capsys):
        args = ["--theta", "45", "--infinite-sample", "--out", str(tmp_path)]
        assert cli.main(["tomo", *args]) == 0
        assert cli.main(["certify", *args]) == 0
        tomo = json.loads((tmp_path / "tomography.json").read_text())
        cert = json.loads((tmp_path / "certificates.json").read_text())
        assert tomo[0]["f_t"] == pytest.approx(1, abs=1e-12)
        assert cert[0]["f_s"] >= 1 - 1e-4

    def test_curve(self, tmp_path, capsys):
        assert cli.main(["curve", "--theta", "45", "--eps-grid", "0,0.05", "--out", str(tmp_path)]) == 0
        rows = read_csv(str(tmp_path / "robust_curves.csv"), ("theta_deg", "epsilon", "f_s"))
        assert [r["epsilon"] for r in rows] == [0.0, 0.05]
        assert rows[0]["f_s"] >= rows[1]["f_s"]

    def test_demo(self, capsys):
        assert cli.main(["demo-miscalibration", "--p", "1", "--xi-deg", "45", "--json"]) == 0
        out = capsys.readouterr().out
        assert "absurd" in out and "1.2071067812" in out

    def test_reference(self, tmp_path, capsys):
        assert cli.main(["report", "--reference", "--out", str(tmp_path)]) == 0
        agg = json.loads((tmp_path / "reference_aggregate.json").read_text())
        assert agg["mean_ratio_printed"] == "0.988"
        assert agg["thetas_deg"] == [35.0, 37.5, 40.0, 42.5, 45.0]
        assert agg["mean_ratio"] == pytest.approx(0.98787, abs=1e-5)

    def test_reference_custom_file(self, tmp_path, capsys):
        path = tmp_path / "ref.csv"
        path.write_text("theta_deg,f_t,f_s\n40,0.9,0.8\n45,1.0,0.9\n")
        assert cli.main(["report", "--reference", str(path), "--out", str(tmp_path)]) == 0
        agg = json.loads((tmp_path / "reference_aggregate.json").read_text())
        assert agg["mean_ratio"] == pytest.approx((0.8 / 0.9 + 0.9) / 2)
        assert "mean_ratio_printed" not in agg


class TestExitCodes:
    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("frobnicate = 3\n")
        assert cli.main(["certify", "--config", str(cfg)]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_bad_theta(self, capsys):
        assert cli.main(["certify", "--theta", "60"]) == 2

    def test_missing_input(self, tmp_path, capsys):
        assert cli.main(["certify", "--input", str(tmp_path / "nowhere")]) == 2

    def test_corrupt_data(self, tmp_path, capsys):
        d = tmp_path / "in"
        d.mkdir()
        (d / "theta_45.json").write_text('{"metadata": {}}')
        assert cli.main(["certify", "--input", str(d), "--out", str(tmp_path)]) == 2
        assert "theta_45.json" in capsys.readouterr().err

    def test_empty_setting(self, tmp_path, capsys):
        data = simulate_data(RunConfig(trials_per_setting=10, counting_mode="poisson", seed=1), 45.0)
        doc = data_to_json(data)
        doc["selftest_settings"][3]["counts"] = {"++": 0, "+-": 0, "-+": 0, "--": 0}
        d = tmp_path / "in"
        d.mkdir()
        (d / "theta_45.json").write_text(json.dumps(doc))
        assert cli.main(["certify", "--input", str(d), "--out", str(tmp_path)]) == 2
        assert "(1, 1)" in capsys.readouterr().err

    def test_solver_failure(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(sdp, "solve", lambda p, tol=None, max_iter=None: sdp._trivial_solution(
            p, sdp.PRIMAL_INFEASIBLE))
        assert cli.main(["certify", "--theta", "45", "--infinite-sample", "--out", str(tmp_path)]) == 3
        assert "theta=45" in capsys.readouterr().err

    def test_verify_missing_report(self, tmp_path, capsys):
        assert cli.main(["verify", "--out", str(tmp_path)]) == 2


def test_data_written_matches_simulation(tmp_path):
    cfg = RunConfig(trials_per_setting=30, seed=5)
    path = write_data(simulate_data(cfg, 42.5), str(tmp_path))
    assert os.path.basename(path) == "theta_42.5.json"
    assert read_data(path).selftest == simulate_data(cfg, 42.5).selftest
    assert math.isfinite(read_data(path).behavior().p.sum())
