import json

import numpy as np
import pytest

from asied.cli import main
from asied.inference import build_grid, read_region
from asied.io import ConfigError, load_config, parse_config, read_dataset

FAST = """\
schema: 1
n: 80
replicates: 2
chain: {n_iter: 600, burn_in: 200}
lr: {n_iter: 300, burn_in: 100}
trial: {resolution: 8}
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(FAST)
    return str(path)


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    return main([*argv, "--out", str(out)]), out


def test_generate_then_identify(tmp_path, config):
    code, gen = _run(tmp_path, "gen", "generate", "--config", config, "--seed", "5")
    assert code == 0
    ds = read_dataset(gen / "data.csv")
    assert len(ds) == 80 and len(ds.panel) == 4 and ds.outcome == "continuous"
    code, ident = _run(tmp_path, "id", "identify", str(gen / "data.csv"), "--config", config, "--seed", "5")
    assert code == 0
    assert {p.name for p in ident.iterdir()} == {"region.txt", "trees.tsv", "summary.json"}
    summary = json.loads((ident / "summary.json").read_text())
    assert summary["method"] == "partition" and summary["n"] == 80 and summary["samples"] == 400
    assert summary["all_comers"]["zone"] in ("Go", "Gray", "Stop")
    header = (ident / "trees.tsv").read_text().splitlines()[0].split("\t")
    assert header == ["structure", "leaves", "count", "frequency", "map_tree"]
    grid = build_grid(ds.panel, 8)
    region = read_region(ident / "region.txt", grid)
    assert region.sum() == summary["subgroup"]["points"]


def test_reruns_are_byte_identical(tmp_path, config):
    _run(tmp_path, "gen", "generate", "--config", config, "--seed", "9")
    data = str(tmp_path / "gen" / "data.csv")
    outs = [_run(tmp_path, f"r{i}", "identify", data, "--config", config, "--seed", "1")[1] for i in range(2)]
    for name in ("region.txt", "trees.tsv", "summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_baseline_lr(tmp_path, config):
    _run(tmp_path, "gen", "generate", "--config", config, "--seed", "2")
    code, out = _run(tmp_path, "lr", "baseline-lr", str(tmp_path / "gen" / "data.csv"), "--config", config,
                     "--seed", "2")
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["method"] == "linear-regression"


def test_schema_error_exits_2_without_output(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema: 1\nseed: 1\nchain: {n_iter: 10, burn_in: 50}\n")
    code, out = _run(tmp_path, "o", "generate", "--config", str(bad))
    assert code == 2 and not out.exists()


@pytest.mark.parametrize("doc", [
    {"schema": 1, "seed": 1, "chian": {}},
    {"schema": 1, "seed": 1, "trial": {"N": 180, "n1": 100, "n2": 90}},
    {"schema": 2, "seed": 1},
    {"schema": 1, "seed": 1, "scenario": "oc-9"},
])
def test_config_rejections(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_unknown_key_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema: 1\nseed: 1\nbogus: 3\n")
    code, out = _run(tmp_path, "o", "oc", "--config", str(bad))
    assert code == 2 and not out.exists()


def test_missing_seed(tmp_path, config):
    code, out = _run(tmp_path, "o", "generate", "--config", config)
    assert code == 2 and not out.exists()
    with pytest.raises(ConfigError):
        load_config(None).with_seed(None)
    assert load_config(config).with_seed(3).trial.seed == 3


def test_bad_dataset_exit_code(tmp_path, config):
    data = tmp_path / "d.csv"
    data.write_text("x1:continuous,z:arm,y:outcome\n0.1,3,1.0\n")
    code, out = _run(tmp_path, "o", "identify", str(data), "--config", config, "--seed", "1")
    assert code == 2 and not out.exists()


def test_dataset_csv_round_trip(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("a:continuous,b:binary,c:ordinal:3,d:categorical:red|green|blue,z:arm,y:outcome\n"
                    "0.5,1,2,green,1,0.3\n-0.2,0,3,blue,2,1.7\n")
    ds = read_dataset(data)
    np.testing.assert_array_equal(ds.X, [[0.5, 1, 2, 2], [-0.2, 0, 3, 3]])
    assert list(ds.z) == [1, 2] and list(ds.y) == [0.3, 1.7]


def test_simulate_writes_log(tmp_path, config):
    code, out = _run(tmp_path, "s", "simulate", "--config", config, "--seed", "4", "--threads", "1")
    assert code == 0
    lines = (out / "decisions.log").read_text().splitlines()
    first = json.loads(lines[0])
    assert first["replicate"] == 0 and first["stage"] == "interim1"
    assert len((out / "trials.tsv").read_text().splitlines()) == 3
