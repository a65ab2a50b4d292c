import json
import subprocess
import sys

import numpy as np
import pytest

from ravkit import cli, formats


def manifest(tmp_path, **kw):
    base = {
        "n_qubits": 2,
        "m0_range": [2, 6, 10],
        "sequences_per_plan": 4,
        "shots": 40,
        "K": [10, 20, 40],
        "seed": 5,
        "noise": {"model": "global", "lambda": 0.1},
    }
    base.update(kw)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(base))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    m = manifest(tmp)
    out = tmp / "out"
    codes = [
        cli.main(["generate", "--manifest", str(m), "--out", str(out)]),
        cli.main(["simulate", "--manifest", str(m), "--out", str(out)]),
        cli.main(["analyze", "--manifest", str(m), "--out", str(out)]),
    ]
    return out, codes, m


def test_pipeline_exit_codes(pipeline):
    assert pipeline[1] == [0, 0, 0]


def test_generate_outputs(pipeline):
    out = pipeline[0]
    files = sorted(p.name for p in (out / "circuits").iterdir())
    assert len(files) == 4 * 2 + 1
    entries = formats.read_index(out / "circuits" / "index.tsv")
    assert [e.status for e in entries] == ["ok"] * 8
    by_pair = {}
    for e in entries:
        by_pair.setdefault(e.pair, []).append(e)
    for rav, xeb in by_pair.values():
        assert rav.kind == "RAV" and xeb.kind == "XEB" and rav.m == xeb.m
        assert rav.epsilon <= 0.04
    echo = json.loads((out / "manifest.json").read_text())
    assert echo["seed"] == 5 and echo["tool_version"]


def test_shot_counts_and_analysis_tables(pipeline):
    out = pipeline[0]
    records = formats.read_shots(out / "shots.tsv")
    assert len(records) == 8
    assert all(r.outcomes.size == 40 for r in records.values())
    header, rows = formats.read_table(out / "analysis" / "fits.tsv")
    runs = {}
    for row in rows:
        d = dict(zip(header, row))
        runs.setdefault((d["kind"], int(d["K"]), d["model"]), set()).add(int(d["run"]))
    assert {k[:2]: len(v) for k, v in runs.items() if k[2] == "exp"} == {
        ("RAV", 10): 4, ("RAV", 20): 2, ("RAV", 40): 1,
        ("XEB", 10): 4, ("XEB", 20): 2, ("XEB", 40): 1,
    }
    header, rows = formats.read_table(out / "analysis" / "stats.tsv")
    status = {int(r[0]): r[header.index("status")] for r in rows}
    assert status == {10: "ok", 20: "ok", 40: "insufficient_runs"}
    single = rows[[int(r[0]) for r in rows].index(40)]
    assert single[header.index("rav_sd")] == "" and single[header.index("rav_mean")] != ""
    header, rows = formats.read_table(out / "analysis" / "model_selection.tsv")
    assert sum(int(r[2]) for r in rows) == 1


def test_analysis_emits_decay_data_and_figures(pipeline):
    a = pipeline[0] / "analysis"
    for kind in ("rav", "xeb"):
        for k in (10, 20, 40):
            header, rows = formats.read_table(a / f"decay_{kind}_K{k}.tsv")
            assert header == ["run", "m", "mean", "sem", "count", "fit_alpha", "chi2_r"]
            assert any(r[0] == "all" for r in rows)
            assert (a / f"decay_{kind}_K{k}.png").stat().st_size > 0
    assert (a / "stats.png").stat().st_size > 0


def test_rerun_is_byte_identical(pipeline, tmp_path):
    out, _, m = pipeline
    again = tmp_path / "again"
    for cmd in ("generate", "simulate", "analyze"):
        assert cli.main([cmd, "--manifest", str(m), "--out", str(again)]) == 0
    for f in sorted(p for p in out.rglob("*") if p.is_file()):
        assert f.read_bytes() == (again / f.relative_to(out)).read_bytes(), f


def test_noiseless_rav_returns(tmp_path, pipeline):
    circuits = pipeline[0] / "circuits"
    assert cli.main(["simulate", "--circuits", str(circuits), "--out", str(tmp_path), "--noise", "none",
                     "--shots", "500", "--seed", "1"]) == 0
    entries = {e.sequence_id: e for e in formats.read_index(circuits / "index.tsv")}
    records = formats.read_shots(tmp_path / "shots.tsv")
    for sid, rec in records.items():
        assert rec.outcomes.size == 500
        if entries[sid].kind == "RAV":
            assert np.mean(rec.outcomes == rec.x0) >= 1 - 3 * entries[sid].epsilon


def test_analyze_kind_and_model_flags(pipeline, tmp_path):
    out = pipeline[0]
    argv = ["analyze", "--circuits", str(out / "circuits"), "--shots-file", str(out / "shots.tsv"),
            "--out", str(tmp_path), "--kind", "RAV", "--K", "20", "--model", "gauss",
            "--weighting", "binned", "--bin-size", "2"]
    assert cli.main(argv) == 0
    header, rows = formats.read_table(tmp_path / "analysis" / "fits.tsv")
    assert {(r[0], r[1], r[3]) for r in rows} == {("RAV", "20", "gauss")}
    assert not (tmp_path / "analysis" / "model_selection.tsv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["analyze", "--K", "x,y"],
        ["simulate", "--noise", "global"],
    ],
)
def test_usage_errors(argv, tmp_path):
    if argv and argv[0] in ("analyze", "simulate"):
        argv = argv + ["--out", str(tmp_path)]
    assert cli.main(argv) == 2


@pytest.mark.parametrize(
    "override",
    [
        {"m0_range": []},
        {"m0_range": [0, 3]},
        {"m0_range": {"min": 5, "max": 1, "count": 3}},
        {"shots": 0},
        {"fit_model": "linear"},
        {"noise": {"model": "thermal"}},
        {"stoq": {"delta_beta": -1}},
        {"colour": "blue"},
    ],
)
def test_invalid_manifest_is_usage_error(tmp_path, override, capsys):
    m = manifest(tmp_path, **override)
    assert cli.main(["generate", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 2
    assert "usage error" in capsys.readouterr().err


def test_missing_out_is_usage_error(tmp_path):
    assert cli.main(["generate", "--manifest", str(manifest(tmp_path))]) == 2


def test_k_must_divide_shots(pipeline):
    assert cli.main(["analyze", "--out", str(pipeline[0]), "--K", "7"]) == 2


def test_m0_range_object_expands():
    assert cli._expand_range({"min": 1, "max": 9, "count": 5}) == [1, 3, 5, 7, 9]


def test_budget_exhaustion_keeps_partial_index(tmp_path, capsys):
    m = manifest(tmp_path, epsilon_target=1e-9, max_restarts=0, stoq={"num_iterations": 5}, sequences_per_plan=2)
    out = tmp_path / "o"
    assert cli.main(["generate", "--manifest", str(m), "--out", str(out)]) == 1
    entries = formats.read_index(out / "circuits" / "index.tsv")
    assert {e.status for e in entries} == {"budget_exceeded"}
    assert "failed" in capsys.readouterr().err


def test_unknown_gate_kind_names_line(pipeline, tmp_path, capsys):
    out = tmp_path / "bad"
    circuits = out / "circuits"
    circuits.mkdir(parents=True)
    src = pipeline[0] / "circuits"
    for f in src.iterdir():
        (circuits / f.name).write_bytes(f.read_bytes())
    target = circuits / "rav_0000.jsonl"
    lines = target.read_text().splitlines()
    lines[2] = lines[2].replace('"kind": "MS"', '"kind": "CZ"')
    target.write_text("\n".join(lines) + "\n")
    assert cli.main(["simulate", "--out", str(out)]) == 1
    assert "rav_0000.jsonl:3:" in capsys.readouterr().err


def test_analyze_rejects_unknown_sequence(pipeline, tmp_path, capsys):
    shots = tmp_path / "shots.tsv"
    formats.write_shots(shots, [formats.ShotRecord("ghost", np.zeros(10, int), np.zeros(10, int))])
    assert cli.main(["analyze", "--out", str(pipeline[0]), "--shots-file", str(shots), "--K", "5"]) == 1
    assert "ghost" in capsys.readouterr().err


def test_stoq_zero_iterations(tmp_path):
    assert cli.main(["stoq", "--out", str(tmp_path), "--iterations", "0", "--runs", "3"]) == 0
    header, rows = formats.read_table(tmp_path / "stoq_traces.tsv")
    assert [r[:2] for r in rows] == [["0", "0"], ["1", "0"], ["2", "0"]]
    assert len({r[2] for r in rows}) == 1
    assert (tmp_path / "cost_traces.png").exists()
    assert len(list(tmp_path.glob("stoq_run*.jsonl"))) == 3


def test_stoq_haar_and_epsilon_target(tmp_path):
    argv = ["stoq", "--out", str(tmp_path), "--target", "haar", "--n", "2", "--iterations", "50",
            "--runs", "2", "--epsilon-target", "1e-9"]
    assert cli.main(argv) == 1
    _, rows = formats.read_table(tmp_path / "stoq_summary.tsv")
    assert len(rows) == 2


def test_stoq_rejects_unknown_ising_size(tmp_path):
    assert cli.main(["stoq", "--out", str(tmp_path), "--n", "4"]) == 2


def test_hamsim_all_methods(tmp_path):
    argv = ["hamsim", "--out", str(tmp_path), "--iterations", "200", "--runs", "2", "--steps", "3",
            "--reps", "50"]
    assert cli.main(argv) == 0
    for method in ("trotter", "qdrift", "stoq"):
        header, rows = formats.read_table(tmp_path / f"path_{method}.tsv")
        assert header == ["run", "m", "elapsed_time", "distance"]
        assert rows
    _, rows = formats.read_table(tmp_path / "hamsim_summary.tsv")
    assert len(rows) == 6
    assert [r for r in rows if r[0] == "trotter"][0][2] == "9"
    assert (tmp_path / "path_distance.png").exists()


def test_stage_seed_distinct():
    seeds = {cli.stage_seed(7, s) for s in (1, 2, 3)}
    assert len(seeds) == 3
    assert cli.stage_seed(7, 1) == cli.stage_seed(7, 1)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ravkit", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "ravkit" in res.stdout
