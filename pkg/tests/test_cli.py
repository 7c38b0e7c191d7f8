import json

import pytest

from morpher.cli import main
from morpher.config import ConfigError, load_config


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture()
def separable_files(tmp_path):
    """Materialize a small separable dataset via the gen subcommand."""
    out = tmp_path / "gen"
    cfg = write(tmp_path / "gen.toml", f"""
[run]
seed = 7
output_dir = "{out}"

[gen]
kind = "separable"
n_graphs = 40
nodes_per_graph = 10
dim = 4
num_classes = 2
noise = 0.1
""")
    assert main(["gen", "--config", cfg]) == 0
    return out / "data.jsonl", out / "labels.json"


def train_toml(tmp_path, data, labels, out, mode="morpher", epochs=60, extra=""):
    return write(tmp_path / f"train_{out.name}.toml", f"""
[run]
mode = "{mode}"
seed = 11
output_dir = "{out}"

[data]
dataset = "{data}"
labels = "{labels}"
shots_per_class = 10

[gnn]
hidden = 16
out_dim = 8

[text]
pseudo_d_t = 16
pseudo_tokens = 8

[prompt]
n_g = 5
n_t = 2

[train]
epochs = {epochs}
lr = 0.01
{extra}
""")


class TestConfig:
    def test_unknown_table_rejected(self, tmp_path):
        cfg = write(tmp_path / "c.toml", "[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="unknown table"):
            load_config(cfg)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write(tmp_path / "c.toml", "[run]\nseeed = 1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(cfg)

    def test_wrong_type_rejected(self, tmp_path):
        cfg = write(tmp_path / "c.toml", "[run]\nseed = \"five\"\n")
        with pytest.raises(ConfigError, match="wrong type"):
            load_config(cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.toml")

    def test_cli_reports_unknown_key_as_failure(self, tmp_path):
        cfg = write(tmp_path / "c.toml", "[run]\nbogus = 1\n")
        assert main(["gradcheck", "--config", cfg]) == 1


class TestTrainCommand:
    def test_writes_all_artifacts(self, tmp_path, separable_files):
        data, labels = separable_files
        out = tmp_path / "run1"
        cfg = train_toml(tmp_path, data, labels, out)
        assert main(["train", "--config", cfg]) == 0
        for name in ("state.mpst", "history.csv", "report.json", "manifest.json"):
            assert (out / name).exists()
        report = json.loads((out / "report.json").read_text())
        assert report["accuracy"] >= 0.9
        header = (out / "history.csv").read_text().splitlines()[0]
        assert header == "epoch,loss,train_acc,val_acc"

    def test_identical_runs_byte_identical_state(self, tmp_path, separable_files):
        data, labels = separable_files
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg_a = train_toml(tmp_path, data, labels, out_a, epochs=25)
        cfg_b = train_toml(tmp_path, data, labels, out_b, epochs=25)
        assert main(["train", "--config", cfg_a]) == 0
        assert main(["train", "--config", cfg_b]) == 0
        assert (out_a / "state.mpst").read_bytes() == (out_b / "state.mpst").read_bytes()

    def test_manifest_rerun_reproduces_bitwise(self, tmp_path, separable_files):
        data, labels = separable_files
        out = tmp_path / "m"
        cfg = train_toml(tmp_path, data, labels, out, epochs=25)
        assert main(["train", "--config", cfg]) == 0
        first = (out / "state.mpst").read_bytes()
        assert main(["train", "--config", str(out / "manifest.json")]) == 0
        assert (out / "state.mpst").read_bytes() == first

    def test_seed_override_changes_state(self, tmp_path, separable_files):
        data, labels = separable_files
        out_a, out_b = tmp_path / "s1", tmp_path / "s2"
        cfg_a = train_toml(tmp_path, data, labels, out_a, epochs=10)
        cfg_b = train_toml(tmp_path, data, labels, out_b, epochs=10)
        assert main(["train", "--config", cfg_a]) == 0
        assert main(["train", "--config", cfg_b, "--seed", "99"]) == 0
        assert (out_a / "state.mpst").read_bytes() != (out_b / "state.mpst").read_bytes()
        manifest = json.loads((out_b / "manifest.json").read_text())
        assert manifest["config"]["run"]["seed"] == 99

    def test_baseline_mode_trains(self, tmp_path, separable_files):
        data, labels = separable_files
        out = tmp_path / "head"
        cfg = train_toml(tmp_path, data, labels, out, mode="improved_aio_head")
        assert main(["train", "--config", cfg]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["accuracy"] >= 0.9

    def test_missing_dataset_fails(self, tmp_path):
        out = tmp_path / "x"
        cfg = train_toml(tmp_path, tmp_path / "absent.jsonl", tmp_path / "absent.json", out)
        assert main(["train", "--config", cfg]) == 1


class TestEvalCommand:
    def test_eval_after_train(self, tmp_path, separable_files):
        data, labels = separable_files
        out = tmp_path / "t"
        cfg = train_toml(tmp_path, data, labels, out)
        assert main(["train", "--config", cfg]) == 0
        eval_out = tmp_path / "e"
        eval_cfg = write(tmp_path / "eval.toml", f"""
[run]
seed = 11
output_dir = "{eval_out}"

[data]
dataset = "{data}"
labels = "{labels}"
shots_per_class = 10

[gnn]
hidden = 16
out_dim = 8

[text]
pseudo_d_t = 16
pseudo_tokens = 8

[eval]
state = "{out / 'state.mpst'}"
split = "test"
""")
        assert main(["eval", "--config", eval_cfg]) == 0
        report = json.loads((eval_out / "report.json").read_text())
        assert report["accuracy"] >= 0.9

    def test_mismatched_embedding_width_is_error(self, tmp_path, separable_files):
        data, labels = separable_files
        out = tmp_path / "t2"
        cfg = train_toml(tmp_path, data, labels, out, epochs=5)
        assert main(["train", "--config", cfg]) == 0
        bad_cfg = write(tmp_path / "bad_eval.toml", f"""
[run]
seed = 11
output_dir = "{tmp_path / 'be'}"

[data]
dataset = "{data}"
labels = "{labels}"

[text]
pseudo_d_t = 32

[eval]
state = "{out / 'state.mpst'}"
""")
        assert main(["eval", "--config", bad_cfg]) == 1


class TestZeroShotCommand:
    def test_writes_curves(self, tmp_path):
        out = tmp_path / "z"
        cfg = write(tmp_path / "z.toml", f"""
[run]
mode = "morpher"
seed = 4
output_dir = "{out}"

[text]
pseudo_d_t = 32

[prompt]
n_g = 5
n_t = 2

[train]
epochs = 4
lr = 0.003
tau = 0.1

[zeroshot]
labels = ["alpha", "beta", "alphabeta"]
network_nodes = 150
network_extra_edges = 200
""")
        assert main(["zeroshot", "--config", cfg]) == 0
        lines = (out / "curves.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,acc_train2,acc_train3,acc_test_zero"
        assert len(lines) == 5


class TestGradcheckCommand:
    def test_passes_and_prints(self, tmp_path, capsys):
        cfg = write(tmp_path / "g.toml", f"""
[run]
seed = 0
output_dir = "{tmp_path / 'g'}"

[gradcheck]
instances = 5
""")
        assert main(["gradcheck", "--config", cfg]) == 0
        captured = capsys.readouterr().out
        assert captured.count("worst relative error") == 4


class TestGenCommand:
    def test_network_kind(self, tmp_path):
        out = tmp_path / "net"
        cfg = write(tmp_path / "n.toml", f"""
[run]
seed = 3
output_dir = "{out}"

[gen]
kind = "network"
network_nodes = 50
network_extra_edges = 20
out_edges = "edges.txt"
""")
        assert main(["gen", "--config", cfg]) == 0
        lines = (out / "edges.txt").read_text().strip().splitlines()
        assert len(lines) == 70

    def test_zero_kind(self, tmp_path):
        out = tmp_path / "zero"
        cfg = write(tmp_path / "zg.toml", f"""
[run]
seed = 3
output_dir = "{out}"

[gen]
kind = "zero"

[zeroshot]
labels = ["a", "b", "c"]
network_nodes = 150
network_extra_edges = 100
""")
        assert main(["gen", "--config", cfg]) == 0
        lines = (out / "data.jsonl").read_text().strip().splitlines()
        assert len(lines) == 120

    def test_unknown_kind(self, tmp_path):
        cfg = write(tmp_path / "bad.toml", f"""
[run]
output_dir = "{tmp_path / 'bk'}"

[gen]
kind = "mystery"
""")
        assert main(["gen", "--config", cfg]) == 1


class TestLogEnv:
    def test_bad_level_rejected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MORPHER_LOG", "verbose")
        cfg = write(tmp_path / "c.toml", "[run]\nseed = 1\n")
        assert main(["gradcheck", "--config", cfg]) == 1

    def test_debug_level_accepted(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MORPHER_LOG", "debug")
        cfg = write(tmp_path / "c.toml", f"""
[run]
seed = 0
output_dir = "{tmp_path / 'dl'}"

[gradcheck]
instances = 1
""")
        assert main(["gradcheck", "--config", cfg]) == 0
