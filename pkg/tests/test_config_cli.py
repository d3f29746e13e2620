import csv
import json

import pytest

from iukit.cli import main, run
from iukit.config import build_kernel, build_region, config_hash, parse_config
from iukit.errors import ConfigError
from iukit.geometry import Horn

KERNEL = {"dim": 2, "phi": {"kind": "power", "alpha": 1.0}, "chi": {"gamma": 0}}
HORN = {"kind": "horn", "dim": 2, "f": {"kind": "log_power", "theta": 2.0}}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def read_artifacts(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if not p.name.endswith(".meta.json")}


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------
def test_parse_builds_objects():
    doc = parse_config({"task": "classify", "kernel": KERNEL, "region": HORN})
    k = build_kernel(doc["kernel"])
    D = build_region(doc["region"], k.phi)
    assert k.dim == 2 and isinstance(D, Horn)


@pytest.mark.parametrize("doc", [None, {}, [], "classify"])
def test_empty_or_non_mapping_is_config_error(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_schema_error_carries_key_path():
    bad = {"task": "classify", "kernel": {**KERNEL, "phi": {"kind": "power", "alpha": 2.5}}, "region": HORN}
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    assert exc.value.path == ("kernel", "phi", "alpha")


def test_task_specific_blocks_required():
    with pytest.raises(ConfigError):
        parse_config({"task": "solve", "kernel": KERNEL, "region": HORN})
    with pytest.raises(ConfigError):
        parse_config({"task": "sweep"})


def test_dimension_mismatch():
    with pytest.raises(ConfigError) as exc:
        parse_config({"task": "classify", "kernel": {**KERNEL, "dim": 3}, "region": HORN})
    assert exc.value.path == ("region", "dim")


def test_config_hash_is_key_order_free():
    a = {"task": "classify", "kernel": KERNEL, "region": HORN}
    b = {"region": dict(reversed(list(HORN.items()))), "kernel": KERNEL, "task": "classify"}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "threshold": 6.0})


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------
def test_classify_log_power_theta_two(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"kernel": KERNEL, "region": HORN})
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    body = json.loads((tmp_path / "o" / "classify.json").read_text())
    assert body["iu"] == "yes"
    assert "theta > 1" in body["reason"]
    assert body["config_hash"]
    stdout = json.loads(capsys.readouterr().out)
    assert stdout["iu"] == "yes"


def test_empty_config_exit_two(tmp_path, capsys):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert main(["classify", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_file_exit_two(tmp_path):
    assert main(["classify", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_schema_violation_exit_two_names_key(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"kernel": KERNEL, "region": {**HORN, "f": {"kind": "spiral"}}})
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "region.f.kind" in capsys.readouterr().err


def test_numeric_error_exit_three_verbatim(tmp_path, capsys):
    doc = {"kernel": KERNEL, "region": {"kind": "ball", "dim": 2, "center": [0.5, 0.5], "radius": 0.3},
           "grid": {"h": 1.0}}
    cfg = write(tmp_path / "c.json", doc)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert err.startswith("DiscretizationError: ")


def test_sweep_flips_exactly_above_one(tmp_path):
    doc = {"sweep": {"family": "log_power_horn", "gammas": [0], "thetas": [0.5, 1, 1.5, 2]}}
    cfg = write(tmp_path / "s.json", doc)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "sweep.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    yes = {float(r["theta"]) for r in rows if r["iu"] == "yes"}
    assert yes == {1.5, 2.0}
    assert {r["iu"] for r in rows if float(r["theta"]) <= 1} == {"no"}


def test_reruns_byte_identical(tmp_path):
    doc = {"kernel": KERNEL, "region": {"kind": "ball", "dim": 2, "radius": 1.0}, "grid": {"h": 0.25, "t": 1.0},
           "mc": {"paths": 300, "seed": 3, "eps": 0.1, "x0": [0.0, 0.0]}}
    cfg = write(tmp_path / "c.json", doc)
    outs = []
    for task in ("solve", "simulate", "classify"):
        for k in (1, 2):
            assert main([task, "--config", cfg, "--out", str(tmp_path / f"{task}{k}")]) == 0
        outs.append((read_artifacts(tmp_path / f"{task}1"), read_artifacts(tmp_path / f"{task}2")))
    for a, b in outs:
        assert a and a == b


def test_every_artifact_embeds_hash(tmp_path):
    doc = {"kernel": KERNEL, "region": HORN}
    cfg = write(tmp_path / "c.json", doc)
    main(["classify", "--config", cfg, "--out", str(tmp_path / "o")])
    h = json.loads((tmp_path / "o" / "classify.json").read_text())["config_hash"]
    for name, data in read_artifacts(tmp_path / "o").items():
        assert h.encode() in data, name
    for side in (tmp_path / "o").glob("*.meta.json"):
        meta = json.loads(side.read_text())
        assert meta["config_hash"] == h and "timestamp" in meta


def test_seed_flag_overrides(tmp_path):
    doc = {"kernel": KERNEL, "region": {"kind": "ball", "dim": 2, "radius": 1.0},
           "mc": {"paths": 200, "seed": 1, "eps": 0.1}}
    cfg = write(tmp_path / "c.json", doc)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    a = json.loads((tmp_path / "a" / "simulate.json").read_text())
    b = json.loads((tmp_path / "b" / "simulate.json").read_text())
    assert a["mean_exit_time"]["estimate"] != b["mean_exit_time"]["estimate"]


def test_report_bundles_and_refuses_mismatch(tmp_path):
    d1 = {"kernel": KERNEL, "region": HORN}
    d2 = {"kernel": KERNEL, "region": {**HORN, "f": {"kind": "log_power", "theta": 0.5}}}
    out = tmp_path / "o"
    run({**d1, "task": "classify"}, out / "a")
    run({**d2, "task": "classify"}, out / "c")
    same = write(tmp_path / "r.json", {"report": {"inputs": [str(out / "a" / "classify.json")]}})
    assert main(["report", "--config", same, "--out", str(out / "r")]) == 0
    bundle = json.loads((out / "r" / "report.json").read_text())
    assert bundle["config_hash"] == json.loads((out / "a" / "classify.json").read_text())["config_hash"]
    assert "version" in bundle
    mixed = write(tmp_path / "m.json", {"report": {"inputs": [str(out / "a" / "classify.json"),
                                                              str(out / "c" / "classify.json")]}})
    assert main(["report", "--config", mixed, "--out", str(out / "m")]) == 2
    assert not (out / "m" / "report.json").exists()


def test_envelope_writes_axis_csv(tmp_path):
    doc = {"kernel": {"dim": 2, "phi": {"kind": "power", "alpha": 1.0}},
           "region": {"kind": "horn", "dim": 2, "f": {"kind": "exp", "theta": 1.0}},
           "grid": {"h": 0.25, "box": [[0.0, 8.0], [-1.0, 1.0]]},
           "threshold": 1.0, "envelope": {"x1_min": 1.0, "x1_max": 5.0}}
    cfg = write(tmp_path / "e.json", doc)
    assert main(["envelope", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "envelope.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    assert list(rows[0]) == ["x1", "phi1", "lower_env", "upper_env", "log_ratio_lower", "log_ratio_upper"]
    x = [float(r["x1"]) for r in rows]
    assert x == sorted(x) and x[0] >= 1.0 and x[-1] <= 5.0
