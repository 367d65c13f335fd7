import csv
import json

import yaml

from simmetric.cli import main

ADVERSARIAL = {
    "problem": {
        "system": {"type": "linear", "A": [[1.0]], "B": [[0.5]]},
        "abstraction": {"type": "linear", "A": [[1.0]], "B": [[1.0]]},
        "environment": {"space": "target-ball", "H": 1, "x0": [0.0],
                        "target_ranges": [[0.5, 1.5]], "radius": 0.2},
        "scheme": {"type": "uniform-sequence", "lo": [-2.0], "hi": [2.0]},
    },
    "scenario": {"epsilon": 0.05, "beta": 0.001, "seed": 1},
}


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def read_json(path):
    return json.loads(path.read_text())


# estimate -----------------------------------------------------------------------

def test_estimate_spec_writes_outputs(tmp_path, capsys):
    rc = main(["estimate", "--preset", "running-example", "--metric", "spec", "--seed", "7",
               "-n", "150", "--out", str(tmp_path)])
    assert rc == 0
    s = read_json(tmp_path / "summary.json")
    assert s["d_hat"] == 0.0 and s["N"] == 150 and s["metric"] == "spec" and s["seed"] == 7
    lines = (tmp_path / "samples.jsonl").read_text().splitlines()
    assert len(lines) == 150
    assert max(json.loads(l)["d"] for l in lines) == s["d_hat"]
    out = capsys.readouterr().out
    assert "d_hat=0" in out and "N=150" in out and "epsilon=0.01" in out and "beta=1e-06" in out
    meta = read_json(tmp_path / "run_meta.json")
    assert "elapsed_s" in meta and "elapsed_s" not in s


def test_estimate_ssm_positive(tmp_path):
    assert main(["estimate", "--preset", "running-example", "--metric", "ssm", "--seed", "7",
                 "-n", "300", "--out", str(tmp_path)]) == 0
    assert 0.1 < read_json(tmp_path / "summary.json")["d_hat"] < 0.6


def test_estimate_persists_violating_trajectories(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {**ADVERSARIAL, "scenario": {"n": 20, "seed": 3}})
    out = tmp_path / "o"
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    recs = [json.loads(l) for l in (out / "samples.jsonl").read_text().splitlines()]
    bad = [r for r in recs if r["sat_M"] and not r["sat_S"]]
    assert bad
    first = bad[0]["index"]
    rows = list(csv.reader(open(out / "trajectories" / f"sample_{first:06d}_system.csv")))
    assert rows[0] == ["t", "x0", "u0"] and len(rows) == 3


def test_summary_identical_across_thread_counts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, threads in ((a, "1"), (b, "4")):
        assert main(["estimate", "--preset", "running-example", "--metric", "ssm", "--seed", "2",
                     "-n", "100", "--threads", threads, "--out", str(out)]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert (a / "samples.jsonl").read_bytes() == (b / "samples.jsonl").read_bytes()


def test_missing_preset_name_exits_2(capsys):
    assert main(["estimate", "--preset"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_preset_and_no_problem_exit_2(tmp_path):
    assert main(["estimate", "--preset", "nope"]) == 2
    assert main(["estimate", "--out", str(tmp_path)]) == 2


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", {"preset": "running-example", "scenari": {}})
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "scenari" in capsys.readouterr().err
    cfg = write_yaml(tmp_path / "d.yaml", {"preset": "running-example", "scenario": {"sed": 1}})
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_preset_and_problem_together_exit_2(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {**ADVERSARIAL, "preset": "running-example"})
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_bad_problem_block_exits_2(tmp_path):
    bad = json.loads(json.dumps(ADVERSARIAL))
    bad["problem"]["system"]["mass"] = 2
    cfg = write_yaml(tmp_path / "c.yaml", bad)
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "env-out"
    monkeypatch.setenv("SIMMETRIC_OUT", str(target))
    assert main(["estimate", "--preset", "running-example", "-n", "5"]) == 0
    assert (target / "summary.json").exists()


def test_config_output_dir_and_scenario_block(tmp_path):
    target = tmp_path / "cfg-out"
    cfg = write_yaml(tmp_path / "c.yaml", {"preset": "running-example",
                                          "scenario": {"n": 8, "seed": 4, "metric": "ssm"},
                                          "output": {"dir": str(target)}})
    assert main(["estimate", "--config", cfg]) == 0
    s = read_json(target / "summary.json")
    assert s["N"] == 8 and s["seed"] == 4 and s["metric"] == "ssm"


# validate -----------------------------------------------------------------------

def test_validate_running_example_passes(tmp_path, capsys):
    rc = main(["validate", "--preset", "running-example", "--d-hat", "0", "-M", "200",
               "--seed", "7", "--out", str(tmp_path)])
    assert rc == 0
    v = read_json(tmp_path / "validation.json")
    assert v["fraction"] == 0.0 and v["passed"] and v["seed"] == 8
    assert "PASS" in capsys.readouterr().out


def test_validate_adversarial_fails(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", ADVERSARIAL)
    assert main(["validate", "--config", cfg, "--d-hat", "0", "-M", "200", "--out", str(tmp_path)]) == 1
    assert read_json(tmp_path / "validation.json")["fraction"] > 0.5
    assert "FAIL" in capsys.readouterr().out


def test_validate_from_summary(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", ADVERSARIAL)
    est = tmp_path / "est"
    assert main(["estimate", "--config", cfg, "--out", str(est)]) == 0
    assert main(["validate", "--config", cfg, "--from-summary", str(est / "summary.json"),
                 "-M", "1000", "--out", str(tmp_path / "val")]) == 0
    v = read_json(tmp_path / "val" / "validation.json")
    assert v["d_hat"] == read_json(est / "summary.json")["d_hat"]


def test_validate_bad_batch_and_seed_exit_2(tmp_path):
    assert main(["validate", "--preset", "running-example", "--d-hat", "0", "-M", "0",
                 "--out", str(tmp_path)]) == 2
    assert main(["validate", "--preset", "running-example", "--d-hat", "0", "--seed", "3",
                 "--fresh-seed", "3", "--out", str(tmp_path)]) == 2
    assert main(["validate", "--preset", "running-example", "--out", str(tmp_path)]) == 2


# kernel -------------------------------------------------------------------------

def test_kernel_rejects_problem_without_corridor(tmp_path):
    assert main(["kernel", "--preset", "running-example", "--out", str(tmp_path)]) == 2


def test_kernel_conservative_contained(tmp_path, capsys):
    assert main(["kernel", "--preset", "quadrotor-conservative", "--margins", "0",
                 "--out", str(tmp_path)]) == 0
    assert "kernel(M,0) ⊆ kernel(S,0): true" in capsys.readouterr().out
    rep = read_json(tmp_path / "containment.json")["reports"][0]
    assert rep["contained"] and rep["violating_cells"] == 0
    with open(tmp_path / "kernel_abstraction_0.csv") as fh:
        assert sum(1 for _ in fh) == 201 * 201 + 1
    assert (tmp_path / "kernel_system_0.csv").exists()


# envset -------------------------------------------------------------------------

def test_envset_needs_margins(tmp_path):
    assert main(["envset", "--preset", "running-example", "--out", str(tmp_path)]) == 2
    assert main(["envset", "--preset", "running-example", "--margins", "-0.1",
                 "--out", str(tmp_path)]) == 2


def test_envset_fractions(tmp_path, capsys):
    assert main(["envset", "--preset", "running-example", "--margins", "0", "0.43", "0.5",
                 "--samples", "60", "--cap", "20", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "envset.csv")))
    fr = [float(r["fraction"]) for r in rows]
    assert fr[0] == 1.0 and fr[1] < 1.0 and fr[2] == 0.0
    assert [r["fraction"] for r in read_json(tmp_path / "envset.json")["rows"]] == fr
    assert "margin=0.43" in capsys.readouterr().out


def test_threads_must_be_positive():
    assert main(["estimate", "--preset", "running-example", "--threads", "0"]) == 2


def test_explicit_kernel_backed_problem(tmp_path, capsys):
    corridor = {"type": "box", "lo": [0.5], "hi": [2.5], "coords": [0]}
    cfg = write_yaml(tmp_path / "c.yaml", {
        "problem": {
            "system": {"type": "quadrotor", "k": 18.0},
            "abstraction": {"type": "quadrotor", "k": 17.0},
            "environment": {"space": "box-start", "H": 20, "x0_ranges": [[0.5, 2.5], [-3.0, 4.0]],
                            "avoid": {"type": "complement", "inner": corridor}},
            "scheme": {"type": "least-restrictive", "corridor": corridor,
                       "grid": {"lo": [0.0, -4.0], "hi": [3.0, 4.0], "counts": [41, 41]}},
            "ssm_scheme": {"type": "uniform-sequence"},
            "coords": [0],
        },
        "scenario": {"n": 40, "seed": 2},
    })
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "e")]) == 0
    assert read_json(tmp_path / "e" / "summary.json")["d_hat"] >= 0.0
    assert main(["kernel", "--config", cfg, "--out", str(tmp_path / "k")]) == 0
    assert "on start domain" in capsys.readouterr().out
