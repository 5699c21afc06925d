import json

import pytest

from asyncgossip.cli import main

BASE_CONFIG = """\
topology=ring
n=8
ratio=1
objective=quadratic
d=3
mu=0.5
L=2.0
zeta=1.0
sigma=0.3
objective_seed=3
horizon=10
gamma=auto
accelerated=true
seeds=0,1
sample_period=2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text(BASE_CONFIG)
    return p


class TestSpectral:
    def test_ring4_ratio2(self, capsys):
        assert main(["spectral", "--ring", "4", "--ratio", "2"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["chi1"] == pytest.approx(0.5, rel=1e-9)
        # Ratio scaling: ratio-2 constants are half the ratio-1 constants.
        assert main(["spectral", "--ring", "4", "--ratio", "1"]) == 0
        base = json.loads(capsys.readouterr().out)
        assert out["chi1"] == pytest.approx(base["chi1"] / 2)
        assert out["chi2"] == pytest.approx(base["chi2"] / 2)

    def test_custom_edges(self, capsys):
        rc = main(["spectral", "--edges", "0-1,1-2", "--n", "3"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["chi1"] > 0

    def test_requires_exactly_one_topology(self, capsys):
        assert main(["spectral", "--ring", "4", "--complete", "4"]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error:") and "\n" not in err.strip()

    def test_disconnected_graph_single_line_error(self, capsys):
        rc = main(["spectral", "--edges", "0-1,2-3", "--n", "4"])
        assert rc == 2
        err = capsys.readouterr().err
        assert err.startswith("error:graph:")


class TestSimulate:
    def test_writes_csv_and_json_per_seed(self, config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        for seed in (0, 1):
            assert (out / f"run-simulate-seed{seed}.csv").exists()
            data = json.loads(
                (out / f"run-simulate-seed{seed}.json").read_text()
            )
            assert data["config"]["seed"] == seed
            assert data["config"]["gamma"] > 0

    def test_byte_identical_reruns(self, config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(config), "--seed", "0", "--out", str(a)])
        main(["simulate", "--config", str(config), "--seed", "0", "--out", str(b)])
        csv_a = (a / "run-simulate-seed0.csv").read_bytes()
        csv_b = (b / "run-simulate-seed0.csv").read_bytes()
        assert csv_a == csv_b

    def test_unknown_key_rejected(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text(BASE_CONFIG + "mystery_knob=1\n")
        assert main(["simulate", "--config", str(p)]) == 2
        assert capsys.readouterr().err.startswith("error:config:")

    def test_missing_required_key(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("topology=ring\nn=4\n")   # no horizon
        assert main(["simulate", "--config", str(p)]) == 2

    def test_missing_file(self, capsys):
        assert main(["simulate", "--config", "/does/not/exist.cfg"]) == 2

    def test_gamma_above_bound_refused_without_override(self, tmp_path, capsys):
        p = tmp_path / "hot.cfg"
        p.write_text(BASE_CONFIG.replace("gamma=auto", "gamma=0.9"))
        assert main(["simulate", "--config", str(p), "--seed", "0",
                     "--out", str(tmp_path)]) == 3
        assert capsys.readouterr().err.startswith("error:run:")
        assert main(["simulate", "--config", str(p), "--seed", "0",
                     "--out", str(tmp_path), "--override-gamma"]) == 0

    def test_env_var_default_out_dir(self, config, tmp_path, monkeypatch):
        envdir = tmp_path / "envout"
        monkeypatch.setenv("ASYNCGOSSIP_OUT_DIR", str(envdir))
        assert main(["simulate", "--config", str(config), "--seed", "0"]) == 0
        assert (envdir / "run-simulate-seed0.csv").exists()


class TestOtherEngines:
    def test_baseline(self, config, tmp_path):
        out = tmp_path / "out"
        assert main(["baseline", "--config", str(config), "--seed", "0",
                     "--out", str(out)]) == 0
        data = json.loads((out / "run-baseline-seed0.json").read_text())
        assert data["config"]["engine"] == "sync-baseline"

    def test_runtime(self, config, tmp_path):
        out = tmp_path / "out"
        assert main(["runtime", "--config", str(config), "--seed", "0",
                     "--out", str(out)]) == 0
        data = json.loads((out / "run-runtime-seed0.json").read_text())
        assert data["config"]["engine"] == "concurrent-runtime"
        assert "timing" in data["config"]


class TestCompare:
    def test_matrix_summary(self, tmp_path):
        p = tmp_path / "cmp.cfg"
        p.write_text(
            "topology=ring\nn=16\nratio=1\nobjective=quadratic\nd=2\n"
            "mu=1.0\nL=1.0\nzeta=0\nsigma=0\nobjective_seed=1\n"
            "horizon=120\ngamma=0\naccelerated=false\nseeds=0,1\n"
            "sample_period=4\ninit=spread\nratios=1,2\n"
            "consensus_threshold=0.001\n"
        )
        out = tmp_path / "out"
        assert main(["compare", "--config", str(p), "--out", str(out)]) == 0
        summary = json.loads((out / "run-compare.json").read_text())
        rows = {(r["accelerated"], r["ratio"]): r for r in summary["rows"]}
        assert set(rows) == {(True, 1.0), (True, 2.0), (False, 1.0), (False, 2.0)}
        acc1 = rows[(True, 1.0)]["time_to_consensus_threshold"]
        plain1 = rows[(False, 1.0)]["time_to_consensus_threshold"]
        # Accelerated run reaches the consensus threshold first.
        assert acc1 is not None
        assert plain1 is None or acc1 < plain1
