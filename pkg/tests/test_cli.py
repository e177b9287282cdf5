"""Subcommand wiring: files, manifests, replay, exit codes."""

import hashlib
import json
import re
from pathlib import Path

import pytest

from braingraph.cli import main
from braingraph.cohort import parse_volume_table, write_volume_table
from braingraph.selection import SolverError
from braingraph.synth import SynthConfig, generate_cohort

SMALL_SYNTH = {
    "seed": 5,
    "d": 16,
    "group_sizes": {"AD": 8, "CN": 9, "MCI": 9},
    "planted_nodes": [2, 9, 13],
    "effect_sizes": {"AD": -0.15, "CN": 0.0, "MCI": -0.08},
    "invalid_node_count": 2,
}

SELECT_FLAGS = [
    "--lambda-grid", "0.01,1", "--k-grid", "2,3,4",
    "--top-k", "3", "--min-pass", "4",
]


def read_json(path):
    return json.loads(Path(path).read_text())


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def small_cohort(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    config = base / "synth.json"
    config.write_text(json.dumps(SMALL_SYNTH))
    out = base / "synth_run"
    assert main(["synth", "--config", str(config), "--out-dir", str(out)]) == 0
    return out / "cohort.csv"


@pytest.fixture(scope="module")
def select_run(small_cohort, tmp_path_factory):
    out = tmp_path_factory.mktemp("select")
    rc = main(
        ["select", str(small_cohort), "--setting", "subtraction", "AD", "MCI",
         *SELECT_FLAGS, "--out-dir", str(out)]
    )
    assert rc == 0
    return out


def manifest_of(out_dir):
    doc = read_json(Path(out_dir) / "manifest.json")
    assert doc["schema_version"] == 1
    assert doc["kind"] == "run_manifest"
    assert doc["tool"] == "braingraph"
    return doc


# -- synth ---------------------------------------------------------------

def test_synth_writes_cohort_and_manifest(small_cohort):
    ds = parse_volume_table(small_cohort.read_text())
    assert ds.group_sizes == {"AD": 8, "CN": 9, "MCI": 9}
    assert ds.d == 16
    doc = manifest_of(small_cohort.parent)
    assert doc["command"] == "synth"
    assert doc["config"]["synth"]["seed"] == 5
    listed = {Path(o["path"]).name: o["sha256"] for o in doc["outputs"]}
    assert listed == {"cohort.csv": sha256(small_cohort)}
    assert "started_at" in doc and "finished_at" in doc


def test_synth_same_seed_same_digest(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps(SMALL_SYNTH))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["synth", "--config", str(config), "--out-dir", str(out)]) == 0
        outs.append(sha256(out / "cohort.csv"))
    assert outs[0] == outs[1]


def test_synth_seed_flag_overrides_config(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps(SMALL_SYNTH))
    out = tmp_path / "o"
    assert main(["synth", "--config", str(config), "--seed", "99", "--out-dir", str(out)]) == 0
    doc = manifest_of(out)
    assert doc["config"]["synth"]["seed"] == 99
    expected = generate_cohort(SynthConfig.from_dict({**SMALL_SYNTH, "seed": 99}))
    assert (out / "cohort.csv").read_text() == write_volume_table(expected)


def test_synth_bad_json_config_exits_2(tmp_path, capsys):
    config = tmp_path / "broken.json"
    config.write_text("{not json")
    assert main(["synth", "--config", str(config), "--out-dir", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_synth_unknown_config_key_exits_2(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"seed": 1, "bogus": True}))
    assert main(["synth", "--config", str(config), "--out-dir", str(tmp_path / "o")]) == 2
    assert "unknown config keys" in capsys.readouterr().err


# -- select --------------------------------------------------------------

def test_select_outputs_and_manifest(select_run, small_cohort):
    assert (select_run / "selection_results.json").exists()
    assert (select_run / "pivotal.json").exists()
    assert (select_run / "pass_counts.png").read_bytes()[:4] == b"\x89PNG"

    results = read_json(select_run / "selection_results.json")
    assert results["kind"] == "selection_results"
    assert len(results["results"]) == 6
    assert results["weighting"] == "ad-mci subtraction"
    assert results["active_node_count"] == 14  # 16 regions minus 2 corrupted

    pivotal = read_json(select_run / "pivotal.json")
    assert pivotal["kind"] == "pivotal_node_set"
    assert pivotal["node_count"] == 16
    assert pivotal["provenance"]["weighting"] == "ad-mci subtraction"
    assert pivotal["provenance"]["valid_node_count"] == 14

    doc = manifest_of(select_run)
    assert doc["command"] == "select"
    assert [Path(i["path"]).name for i in doc["inputs"]] == ["cohort.csv"]
    assert doc["inputs"][0]["sha256"] == sha256(small_cohort)
    assert sorted(Path(o["path"]).name for o in doc["outputs"]) == [
        "pass_counts.png", "pivotal.json", "selection_results.json"
    ]


def test_select_cohort_setting(small_cohort, tmp_path):
    out = tmp_path / "o"
    rc = main(["select", str(small_cohort), *SELECT_FLAGS, "--out-dir", str(out)])
    assert rc == 0
    assert read_json(out / "pivotal.json")["provenance"]["weighting"] == "whole-cohort"


def test_select_rerun_byte_identical(select_run, small_cohort, tmp_path):
    out = tmp_path / "again"
    rc = main(
        ["select", str(small_cohort), "--setting", "subtraction", "AD", "MCI",
         *SELECT_FLAGS, "--out-dir", str(out)]
    )
    assert rc == 0
    for name in ("selection_results.json", "pivotal.json", "pass_counts.png"):
        assert (out / name).read_bytes() == (select_run / name).read_bytes()


def test_select_replay_from_manifest(select_run, tmp_path):
    out = tmp_path / "replay"
    rc = main(["select", "--from-manifest", str(select_run / "manifest.json"),
               "--out-dir", str(out)])
    assert rc == 0
    original = {Path(o["path"]).name: o["sha256"] for o in manifest_of(select_run)["outputs"]}
    replayed = {Path(o["path"]).name: o["sha256"] for o in manifest_of(out)["outputs"]}
    assert original == replayed


def test_select_from_manifest_wrong_command_exits_2(select_run, tmp_path, capsys):
    rc = main(["classify", "--from-manifest", str(select_run / "manifest.json"),
               "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "records command 'select'" in capsys.readouterr().err


def test_select_missing_cohort_exits_2(tmp_path, capsys):
    assert main(["select", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_select_oversized_k_exits_2(small_cohort, tmp_path, capsys):
    rc = main(["select", str(small_cohort), "--k-grid", "200", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "k exceeds node count" in capsys.readouterr().err


def test_select_bad_setting_exits_2(small_cohort, tmp_path, capsys):
    rc = main(["select", str(small_cohort), "--setting", "bogus", *SELECT_FLAGS,
               "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "bad --setting" in capsys.readouterr().err


def test_select_min_pass_fraction(small_cohort, tmp_path):
    out = tmp_path / "o"
    rc = main(
        ["select", str(small_cohort), "--lambda-grid", "0.01,1", "--k-grid", "2,3,4",
         "--top-k", "3", "--min-pass", "0.65", "--out-dir", str(out)]
    )
    assert rc == 0
    # ceil(0.65 * 6) = 4
    assert read_json(out / "pivotal.json")["provenance"]["min_pass_count"] == 4


def test_solver_failure_exits_3(small_cohort, tmp_path, capsys, monkeypatch):
    import braingraph.cli as cli_mod

    def boom(*args, **kwargs):
        raise SolverError("(lambda=0.01, k=2): eigendecomposition failed")

    monkeypatch.setattr(cli_mod, "select_pivotal", boom)
    rc = main(["select", str(small_cohort), *SELECT_FLAGS, "--out-dir", str(tmp_path)])
    assert rc == 3
    assert "lambda=0.01" in capsys.readouterr().err


# -- union ---------------------------------------------------------------

def test_union_single_file_identity(select_run, tmp_path):
    out = tmp_path / "u"
    rc = main(["union", str(select_run / "pivotal.json"), "--out-dir", str(out)])
    assert rc == 0
    original = read_json(select_run / "pivotal.json")
    merged = read_json(out / "pivotal_union.json")
    assert [n["node_index"] for n in merged["nodes"]] == [
        n["node_index"] for n in original["nodes"]
    ]


def test_union_disjoint_sets_concatenate(tmp_path):
    def pivotal_doc(indices, names):
        return {
            "schema_version": 1,
            "kind": "pivotal_node_set",
            "node_count": 10,
            "nodes": [
                {"node_index": i, "region_name": names[i], "pass_count": 41 + i}
                for i in indices
            ],
            "provenance": {},
        }

    names = {i: f"region-{i:03d}" for i in range(10)}
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(pivotal_doc([1, 2], names)))
    b.write_text(json.dumps(pivotal_doc([3], names)))
    out = tmp_path / "u"
    assert main(["union", str(a), str(b), "--out-dir", str(out)]) == 0
    merged = read_json(out / "pivotal_union.json")
    assert [n["node_index"] for n in merged["nodes"]] == [1, 2, 3]
    assert merged["provenance"]["union_of"] == [{}, {}]


def test_union_mismatched_spaces_exit_2(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    doc = {
        "schema_version": 1, "kind": "pivotal_node_set", "node_count": 10,
        "nodes": [{"node_index": 0, "region_name": "x", "pass_count": 41}],
        "provenance": {},
    }
    a.write_text(json.dumps(doc))
    b.write_text(json.dumps({**doc, "node_count": 11}))
    assert main(["union", str(a), str(b), "--out-dir", str(tmp_path / "u")]) == 2
    assert "mismatched node spaces" in capsys.readouterr().err


def test_union_no_files_exits_2(tmp_path, capsys):
    assert main(["union", "--out-dir", str(tmp_path)]) == 2
    assert "at least one" in capsys.readouterr().err


# -- classify ------------------------------------------------------------

@pytest.fixture(scope="module")
def classify_run(small_cohort, select_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("classify")
    rc = main(
        ["classify", str(small_cohort), "--pivotal", str(select_run / "pivotal.json"),
         "--seed", "0", "--train-frac", "0.75", "--max-steps", "300",
         "--out-dir", str(out)]
    )
    assert rc == 0
    return out


def test_classify_outputs(classify_run):
    report = read_json(classify_run / "eval_report.json")
    assert report["kind"] == "eval_report"
    assert report["classes"] == ["AD", "CN", "MCI"]
    assert set(report["per_class_auc"]) == {"AD", "CN", "MCI"}
    assert 0.0 <= report["macro_auc"] <= 1.0
    assert report["hyperparams"]["train_frac"] == 0.75
    for cls in ("AD", "CN", "MCI", "micro"):
        text = (classify_run / f"roc_{cls}.csv").read_text()
        assert text.startswith("threshold,fpr,tpr\ninf,0.0,0.0\n")
    assert (classify_run / "roc_curves.png").read_bytes()[:4] == b"\x89PNG"
    assert (classify_run / "confusion_matrices.png").read_bytes()[:4] == b"\x89PNG"
    doc = manifest_of(classify_run)
    assert doc["command"] == "classify"
    assert len(doc["inputs"]) == 2
    assert len(doc["outputs"]) == 7


def test_classify_fixed_seed_reproducible(classify_run, small_cohort, select_run, tmp_path):
    out = tmp_path / "again"
    rc = main(
        ["classify", str(small_cohort), "--pivotal", str(select_run / "pivotal.json"),
         "--seed", "0", "--train-frac", "0.75", "--max-steps", "300",
         "--out-dir", str(out)]
    )
    assert rc == 0
    assert (out / "eval_report.json").read_bytes() == (
        classify_run / "eval_report.json"
    ).read_bytes()


def test_classify_empty_pivotal_exits_2(small_cohort, tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({
        "schema_version": 1, "kind": "pivotal_node_set", "node_count": 16,
        "nodes": [], "provenance": {},
    }))
    rc = main(["classify", str(small_cohort), "--pivotal", str(empty),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    assert "empty pivotal set" in capsys.readouterr().err


def test_classify_name_mismatch_exits_2(small_cohort, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "schema_version": 1, "kind": "pivotal_node_set", "node_count": 16,
        "nodes": [{"node_index": 0, "region_name": "elsewhere", "pass_count": 41}],
        "provenance": {},
    }))
    rc = main(["classify", str(small_cohort), "--pivotal", str(bad),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    assert "mismatched node spaces" in capsys.readouterr().err


def test_classify_missing_pivotal_flag_exits_2(small_cohort, tmp_path, capsys):
    assert main(["classify", str(small_cohort), "--out-dir", str(tmp_path)]) == 2
    assert "pivotal path required" in capsys.readouterr().err


# -- viz -----------------------------------------------------------------

def test_viz_outputs_and_group_tokens(small_cohort, select_run, tmp_path):
    out = tmp_path / "viz"
    rc = main(
        ["viz", str(small_cohort), "--pivotal", str(select_run / "pivotal.json"),
         "--groups", "AD", "AD-CN", "--cutoff", "1e-6", "--out-dir", str(out)]
    )
    assert rc == 0
    for stem in ("ad", "ad-cn"):
        assert (out / f"subgraph_{stem}.dot").read_text().startswith("graph G {")
        assert (out / f"edges_{stem}.csv").read_text().startswith("node_a,node_b,weight")
        assert (out / f"subgraph_{stem}.png").read_bytes()[:4] == b"\x89PNG"
    doc = manifest_of(out)
    assert doc["command"] == "viz"
    assert len(doc["outputs"]) == 6


def test_viz_edge_count_monotone_in_cutoff(small_cohort, select_run, tmp_path):
    counts = []
    for i, cutoff in enumerate(["1e-6", "0.01"]):
        out = tmp_path / f"viz{i}"
        rc = main(
            ["viz", str(small_cohort), "--pivotal", str(select_run / "pivotal.json"),
             "--groups", "AD", "--cutoff", cutoff, "--out-dir", str(out)]
        )
        assert rc == 0
        counts.append(len((out / "edges_ad.csv").read_text().strip().splitlines()) - 1)
    assert counts[0] >= counts[1]


def test_viz_huge_cutoff_isolated_nodes(small_cohort, select_run, tmp_path):
    out = tmp_path / "viz"
    rc = main(
        ["viz", str(small_cohort), "--pivotal", str(select_run / "pivotal.json"),
         "--groups", "CN", "--cutoff", "1e9", "--out-dir", str(out)]
    )
    assert rc == 0
    text = (out / "subgraph_cn.dot").read_text()
    assert "--" not in text
    assert text.count('";') == len(read_json(select_run / "pivotal.json")["nodes"])


def test_viz_unknown_group_exits_2(small_cohort, select_run, tmp_path, capsys):
    rc = main(
        ["viz", str(small_cohort), "--pivotal", str(select_run / "pivotal.json"),
         "--groups", "XX", "--out-dir", str(tmp_path)]
    )
    assert rc == 2
    assert "unknown group 'XX'" in capsys.readouterr().err


# -- parser-level behavior ----------------------------------------------

def test_unknown_subcommand_raises_usage_exit():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_manifest_timestamps_are_iso(select_run):
    doc = manifest_of(select_run)
    iso = r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}"
    assert re.match(iso, doc["started_at"])
    assert re.match(iso, doc["finished_at"])
