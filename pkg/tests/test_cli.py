import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from perfectsim import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main([str(a) for a in argv], stdout=out, stderr=err)
    records = [json.loads(line) for line in out.getvalue().splitlines()]
    return code, records, err.getvalue()


def cfg(name):
    return CONFIGS / f"{name}.yaml"


@pytest.fixture
def hot_chain(tmp_path):
    p = tmp_path / "hot.yaml"
    p.write_text("dimension: 1\nfamily: pair_table\ncouplings: [[[1], 0.3]]\n")
    return p


def test_every_record_has_schema_and_type():
    for argv in (["check", "--model", cfg("nn_ising_1d")],
                 ["sample", "--model", cfg("zero"), "--replicas", 2],
                 ["mu", "--model", cfg("nn_ising_1d")]):
        code, recs, _ = run(*argv)
        assert code == 0 and recs
        assert all(r["schema"] == 1 and isinstance(r["type"], str) for r in recs)


class TestCheck:
    def test_nn_ising(self):
        code, recs, err = run("check", "--model", cfg("nn_ising_1d"))
        assert code == 0
        h1, h2 = recs
        assert h1["holds"] and h2["holds"]
        assert h1["witness_value"][0] == pytest.approx(0.543807, abs=1e-6)
        assert h2["witness_value"][0] - 1 == pytest.approx(-0.588691, abs=1e-6)
        assert "H1" in err and "H2" in err

    def test_require_failing_condition(self):
        code, _, _ = run("check", "--model", cfg("separation"), "--require", "h1")
        assert code == 4
        code, _, _ = run("check", "--model", cfg("separation"), "--require", "h2")
        assert code == 0


class TestSample:
    def test_zero_model_is_deterministic(self):
        argv = ("sample", "--model", cfg("zero"), "--window", "0,1,2", "--replicas", 10,
                "--seed", 7)
        code, recs, _ = run(*argv)
        assert code == 0
        reps = [r for r in recs if r["type"] == "replica"]
        assert len(reps) == 10 and recs[-1]["type"] == "summary"
        assert all(r["n_stop"] == 3 and len(r["spins"]) == 3 for r in reps)
        assert [r["replica"] for r in reps] == list(range(10))
        assert run(*argv)[1] == recs

    def test_refuses_when_h2_fails(self, hot_chain):
        code, recs, err = run("sample", "--model", hot_chain, "--require", "h2")
        assert code == 4
        assert [r["type"] for r in recs] == ["check"] and "refusing" in err

    def test_step_limit_exit_code(self, hot_chain):
        code, recs, _ = run("sample", "--model", hot_chain, "--window",
                            ",".join(str(i) for i in range(30)), "--max-steps", 3)
        assert code == 3
        assert recs[-1]["type"] == "error" and recs[-1]["error"] == "StepLimitExceeded"

    def test_threads_do_not_change_output(self, monkeypatch):
        monkeypatch.setattr(cli, "PARALLEL_MIN_REPLICAS", 10)
        argv = ["sample", "--model", cfg("nn_ising_1d"), "--window", "0,1", "--replicas", 60,
                "--seed", 2]
        serial = run(*argv, "--threads", 1)
        threaded = run(*argv, "--threads", 3)
        assert serial[0] == threaded[0] == 0
        assert serial[1] == threaded[1]

    def test_seq_override(self):
        code, recs, _ = run("sample", "--model", cfg("nn_ising_1d"), "--seq", "l1_balls")
        assert code == 0 and recs[-1]["sequence"] == "l1_balls"


class TestConfigErrors:
    def test_missing_file(self, tmp_path):
        assert run("check", "--model", tmp_path / "none.yaml")[0] == 2

    def test_bad_family(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("dimension: 1\nfamily: spaghetti\n")
        assert run("mu", "--model", p)[0] == 2

    def test_bad_window(self):
        assert run("sample", "--model", cfg("zero"), "--window", "0,0")[0] == 2

    def test_unknown_policy(self):
        assert run("check", "--model", cfg("zero"), "--seq", "fastest")[0] == 2

    def test_argparse_errors_exit_2(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["sample"], stdout=io.StringIO(), stderr=io.StringIO())
        assert info.value.code == 2


class TestMuAndOptimize:
    def test_mu_with_closed_form(self):
        code, (rec,), _ = run("mu", "--model", cfg("nn_ising_1d"))
        assert code == 0
        assert rec["mu"][0] == pytest.approx(-0.588691, abs=1e-6)
        assert rec["mu_closed_form"] == rec["mu"]

    def test_mu_without_closed_form(self):
        code, (rec,), _ = run("mu", "--model", cfg("triangle"), "--vertex", "0:0")
        assert code == 0 and "mu_closed_form" not in rec and rec["sequence"] == "l1_balls"

    def test_ising_optimal(self):
        code, (rec,), _ = run("optimize-seq", "--model", cfg("single_edge"))
        assert code == 0
        assert rec["increments"] == [[[1]]] and rec["complete"]

    def test_brute_force(self):
        code, (rec,), _ = run("optimize-seq", "--model", cfg("triangle"), "--vertex", "0:0",
                              "--method", "brute_force")
        assert code == 0 and rec["candidates_evaluated"] >= 1 and rec["argmin_sequences"]

    def test_brute_force_cap(self):
        assert run("optimize-seq", "--model", cfg("triangle"), "--vertex", "0:0",
                   "--method", "brute_force", "--cap", 1)[0] == 2

    def test_upsilon(self):
        code, (rec,), _ = run("optimize-seq", "--model", cfg("geometric_2d"), "--seq", "l1_balls",
                              "--method", "upsilon", "--N", 1)
        assert code == 0 and rec["candidates_evaluated"] == 24


class TestExtinct:
    def test_uniform_spec(self):
        code, recs, err = run("extinct", "--spec", cfg("extinct_uniform"), "--runs", 50)
        assert code == 0
        summary = recs[-1]
        assert summary["extinction_fraction"] == 1.0 and summary["hypotheses"]["holds"]
        assert sum(r["type"] == "run" for r in recs) == 50 and "50/50" in err

    def test_generations(self):
        code, recs, _ = run("extinct", "--spec", cfg("gw_super"), "--runs", 200,
                            "--generations", 100)
        assert code == 0
        assert 0.0 < recs[-1]["extinction_fraction"] < 1.0
        assert not recs[-1]["hypotheses"]["holds"]

    def test_generations_need_gw_spec(self):
        assert run("extinct", "--spec", cfg("extinct_uniform"), "--generations", 5)[0] == 2


class TestValidate:
    def test_single_edge_passes(self):
        code, (rec,), _ = run("validate", "--model", cfg("single_edge"), "--replicas", 20_000,
                              "--seed", 1)
        assert code == 0 and rec["passed"] and rec["n"] == 20_000

    def test_biased_samples_fail(self, monkeypatch):
        def biased(region, *args, replicas, **kwargs):
            return np.ones((replicas, len(region)), dtype=np.int8)

        monkeypatch.setattr(cli, "spin_matrix", biased)
        code, (rec,), _ = run("validate", "--model", cfg("single_edge"), "--replicas", 5000)
        assert code == 5 and not rec["passed"]

    def test_needs_explicit_model(self):
        assert run("validate", "--model", cfg("nn_ising_1d"))[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "perfectsim.cli", "check", "--model",
                          str(cfg("nn_ising_1d"))], capture_output=True, text=True)
    assert res.returncode == 0
    assert [json.loads(line)["type"] for line in res.stdout.splitlines()] == ["check", "check"]
