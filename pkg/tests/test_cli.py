import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

import grscale
from grscale.cli import main

DATA = Path(grscale.__file__).parent / "data"
SMALL = ["--set", "train.epochs=1", "--set", "tiger.d_model=32", "--set", "tiger.d_ff=64",
         "--set", "sasrec.d_model=32", "--set", "train.max_valid_users=50",
         "--set", "data.synthetic.n_users=300", "--set", "decode.beam_width=10"]


def grs(out, *args):
    return main([args[0], "--out", str(out), *args[1:]])


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    codes = {}
    for cmd in ("ingest", "synth-embed", "tokenize", "train-tiger", "train-sasrec", "decode", "eval"):
        codes[cmd] = grs(out, cmd, *SMALL)
    return out, codes


def test_full_pipeline_emits_artifacts(pipeline_run):
    out, codes = pipeline_run
    assert all(c == 0 for c in codes.values()), codes
    for name in ("items.jsonl", "interactions.jsonl", "split.jsonl", "embeddings.bin", "codebooks.grsid",
                 "sids.jsonl", "tiger.ckpt", "tiger_metrics.jsonl", "sasrec.ckpt", "cf_embeddings.bin",
                 "decodes.jsonl", "report.json", "manifest.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["recall"]["10"] <= 1.0 and report["model_params"] > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"split.jsonl", "report.json", "tiger.ckpt"} <= set(manifest)
    assert manifest["report.json"]["command"] == "eval"
    assert all("config_hash" in v and "seed" in v for v in manifest.values())


def test_rerun_is_byte_identical(pipeline_run):
    out, _ = pipeline_run
    before = {n: (out / n).read_bytes() for n in ("codebooks.grsid", "sids.jsonl", "split.jsonl")}
    assert grs(out, "ingest", *SMALL) == 0
    assert grs(out, "tokenize", *SMALL) == 0
    assert all((out / n).read_bytes() == b for n, b in before.items())


def test_report_over_runs(pipeline_run, tmp_path):
    out, _ = pipeline_run
    assert grs(tmp_path, "report", str(out)) == 0
    md = (tmp_path / "report.md").read_text().splitlines()
    assert md[0].startswith("| run | model_params | recall@5")
    assert len(md) == 3
    csv = (tmp_path / "scaling_curve.csv").read_text().splitlines()
    assert csv[0] == "run,model_params,recall@5,recall@10,ndcg@5,ndcg@10" and len(csv) == 2


def test_report_with_zero_runs(tmp_path):
    assert grs(tmp_path, "report") == 0
    assert len((tmp_path / "report.md").read_text().splitlines()) == 2
    assert (tmp_path / "scaling_curve.csv").read_text().count("\n") == 1


def test_fit_scaling_golden(tmp_path):
    cfg = tmp_path / "eq4_config.json"
    shutil.copy(DATA / "eq4_config.json", cfg)
    shutil.copy(DATA / "eq4_points.jsonl", tmp_path / "eq4_points.jsonl")
    assert main(["fit-scaling", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "fit.json").read_bytes() == (DATA / "eq4_fit.json").read_bytes()


def test_missing_artifact_exit_code(tmp_path, capsys):
    assert grs(tmp_path, "eval") == 3
    err = capsys.readouterr().err
    assert "split.jsonl" in err and "ingest" in err


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"tokenizer": {"num_levels": 3}}))
    assert main(["ingest", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "num_levels" in capsys.readouterr().err


def test_bad_scaling_data_exit_code(tmp_path):
    pts = tmp_path / "p.jsonl"
    pts.write_text("\n".join(json.dumps({"sizes": {"N_LoRA": 1e7 * (i + 1), "N_LLM": 1e9}, "recall": 1.5})
                             for i in range(10)) + "\n")
    assert grs(tmp_path, "fit-scaling", "--set", f"scaling.points=\"{pts}\"") == 3


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("grscale")
    cmd = [exe] if exe else [sys.executable, "-m", "grscale.cli"]
    proc = subprocess.run([*cmd, "report", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
