import json

import pytest

from polarlab.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("POLARLAB_OUT", str(tmp_path / "manifests"))
    (tmp_path / "arikan.k").write_text("l=2\n10\n11\n")
    (tmp_path / "identity.k").write_text("l=2\n10\n01\n")
    (tmp_path / "singular.k").write_text("l=2\n11\n11\n")
    return tmp_path


def test_kernel_check(workdir, capsys):
    assert main(["kernel", "check", "--file", "arikan.k"]) == 0
    assert capsys.readouterr().out.strip() == "nonsingular=true polarizing=true"
    assert main(["kernel", "check", "--file", "singular.k"]) == 0
    assert "nonsingular=false" in capsys.readouterr().out


def test_kernel_sample_round_trip(workdir, capsys):
    assert main(["kernel", "sample", "--l", "6", "--seed", "4", "--out", "k6.k"]) == 0
    assert main(["kernel", "check", "--file", "k6.k"]) == 0
    assert "nonsingular=true" in capsys.readouterr().out


def test_behavior_exact_rows(workdir, capsys):
    assert main(["behavior", "exact", "--file", "arikan.k"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "i,s,count,total_patterns,mode"
    nonzero = {tuple(int(x) for x in ln.split(",")[:3]) for ln in lines[1:] if ln.split(",")[2] != "0"}
    assert nonzero == {(1, 1, 2), (1, 2, 1), (2, 2, 1)}


def test_every_run_writes_manifest(workdir):
    assert main(["avg", "eval", "--l", "2", "--i", "1", "--z", "0.5"]) == 0
    m = json.loads((workdir / "manifests" / "avg_eval_manifest.json").read_text())
    assert m["command"] == "avg eval" and m["config"]["z"] == 0.5
    assert {"seed", "start", "duration", "versions"} <= set(m)


def test_usage_errors(workdir):
    assert main(["bogus"]) == 2
    assert main(["kernel", "check"]) == 2
    assert main(["code", "fer", "--code", "x.json", "--z", "0.1", "--trials", "0", "--seed", "1"]) == 2


def test_domain_errors(workdir, capsys):
    assert main(["scaling", "mu", "--file", "identity.k"]) == 1
    assert main(["behavior", "exact", "--file", "missing.k"]) == 1
    assert main(["exp", "scaling-fit", "--file", "identity.k", "--out", "fit"]) == 1
    assert "degenerate" in capsys.readouterr().err


def test_code_round_trip(workdir, capsys):
    assert main(["code", "construct", "--kernel", "arikan.k", "-m", "3", "--z", "0.5", "--pe", "0.1", "--out", "code.json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["rate"] == 0.125 and summary["union_bound"] == 0.00390625
    code = json.loads((workdir / "code.json").read_text())
    assert code["frozen_hex"] == "fe" and "p_digest" in code
    assert main(["code", "encode", "--code", "code.json", "--info", "80"]) == 0
    assert capsys.readouterr().out.strip() == "ff"
    assert main(["code", "decode", "--code", "code.json", "--trits", "1e1e1e1e"]) == 0
    assert capsys.readouterr().out.strip() == "80"
    assert main(["code", "decode", "--code", "code.json", "--values", "ff", "--erasures", "0f"]) == 0
    assert capsys.readouterr().out.strip() == "80"
    assert main(["code", "decode", "--code", "code.json", "--trits", "eeeeeeee"]) == 1
    capsys.readouterr()
    assert main(["code", "fer", "--code", "code.json", "--z", "0.5", "--trials", "20000", "--seed", "1"]) == 0
    fer = json.loads(capsys.readouterr().out)
    assert fer["wrong_bits"] == 0 and fer["fer"] <= 0.00390625 + fer["ci"]


def test_scaling_commands(workdir, capsys):
    assert main(["scaling", "lambda", "--file", "arikan.k", "--alpha", "0.5", "--out", "scan.csv"]) == 0
    assert "lambda_star=0.866025403784" in capsys.readouterr().out
    assert main(["scaling", "process", "--file", "arikan.k", "--z0", "0.5", "--m", "4", "--trials", "1000", "--seed", "2"]) == 0
    assert capsys.readouterr().out.startswith("m,mean_g,tail_low,tail_mid,tail_high,ci")
    assert main(["scaling", "mu", "--file", "arikan.k", "--method", "bound", "--alpha", "0.5"]) == 1


def test_exp_concentration_twice_identical(workdir):
    args = ["exp", "concentration", "--l", "8", "--kernels", "6", "--alpha", "0.0625", "--seed", "7"]
    assert main(args + ["--out", "a"]) == 0
    assert main(args + ["--out", "b"]) == 0
    for name in ("concentration_kernels.csv", "concentration_summary.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    assert main(["exp", "rerun", "a/exp_concentration_manifest.json", "--out", "c"]) == 0
    assert (workdir / "a" / "concentration_kernels.csv").read_bytes() == (workdir / "c" / "concentration_kernels.csv").read_bytes()
