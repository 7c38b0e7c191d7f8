"""Run configuration: a fixed TOML schema with unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib


class ConfigError(ValueError):
    """Unknown key, wrong type, or missing required setting."""


_BOOL = bool
_INT = int
_FLOAT = (int, float)
_STR = str
_STR_LIST = list

# table -> key -> accepted type(s); this is the whole surface, typos fail loudly
SCHEMA = {
    "run": {
        "mode": _STR,
        "seed": _INT,
        "threads": _INT,
        "deterministic": _BOOL,
        "output_dir": _STR,
    },
    "data": {
        "dataset": _STR,
        "labels": _STR,
        "pad_to": _INT,
        "shots_per_class": _INT,
    },
    "gnn": {
        "weights": _STR,
        "hidden": _INT,
        "out_dim": _INT,
    },
    "text": {
        "embeddings": _STR,
        "pseudo_d_t": _INT,
        "pseudo_tokens": _INT,
        "midpoint": _STR_LIST,
        "prompt_phrase": _STR,
    },
    "prompt": {
        "n_g": _INT,
        "n_t": _INT,
        "delta_inner": _FLOAT,
        "delta_cross": _FLOAT,
        "init_std_multiplier": _FLOAT,
    },
    "train": {
        "epochs": _INT,
        "lr": _FLOAT,
        "beta1": _FLOAT,
        "beta2": _FLOAT,
        "eps": _FLOAT,
        "weight_decay": _FLOAT,
        "batch_size": _INT,
        "tau": _FLOAT,
    },
    "eval": {
        "state": _STR,
        "split": _STR,
        "silhouette": _BOOL,
    },
    "zeroshot": {
        "base_edges": _STR,
        "network_nodes": _INT,
        "network_extra_edges": _INT,
        "network_seed": _INT,
        "dataset_seed": _INT,
        "labels": _STR_LIST,
    },
    "gradcheck": {
        "instances": _INT,
        "step": _FLOAT,
        "tolerance": _FLOAT,
    },
    "gen": {
        "kind": _STR,
        "out_dataset": _STR,
        "out_labels": _STR,
        "out_edges": _STR,
        "n_graphs": _INT,
        "nodes_per_graph": _INT,
        "dim": _INT,
        "num_classes": _INT,
        "noise": _FLOAT,
        "edge_prob": _FLOAT,
        "network_nodes": _INT,
        "network_extra_edges": _INT,
    },
}

DEFAULTS = {
    "run": {
        "mode": "morpher",
        "seed": 0,
        "threads": 1,
        "deterministic": True,
        "output_dir": "out",
    },
    "data": {"pad_to": 0, "shots_per_class": 10},
    "gnn": {"hidden": 64, "out_dim": 32},
    "text": {"pseudo_d_t": 64, "pseudo_tokens": 8, "prompt_phrase": ""},
    "prompt": {
        "n_g": 10,
        "n_t": 4,
        "delta_inner": 0.5,
        "delta_cross": 0.1,
        "init_std_multiplier": 1.0,
    },
    "train": {
        "epochs": 200,
        "lr": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "weight_decay": 0.0,
        "batch_size": 0,
        "tau": 0.07,
    },
    "eval": {"split": "test", "silhouette": True},
    "zeroshot": {
        "network_nodes": 500,
        "network_extra_edges": 900,
        "network_seed": 21,
        "dataset_seed": 33,
    },
    "gradcheck": {"instances": 20, "step": 1e-5, "tolerance": 1e-4},
    "gen": {
        "kind": "separable",
        "n_graphs": 40,
        "nodes_per_graph": 12,
        "dim": 4,
        "num_classes": 2,
        "noise": 0.05,
        "edge_prob": 0.3,
        "network_nodes": 500,
        "network_extra_edges": 900,
    },
}


@dataclass
class RunConfig:
    """Validated settings for one process, resolved from file plus overrides."""

    tables: dict = field(default_factory=dict)
    source_path: str = ""

    def get(self, table: str, key: str, default=None):
        if table in self.tables and key in self.tables[table]:
            return self.tables[table][key]
        if default is not None:
            return default
        if key in DEFAULTS.get(table, {}):
            return DEFAULTS[table][key]
        return None

    def require(self, table: str, key: str):
        value = self.get(table, key)
        if value is None:
            raise ConfigError(f"missing required setting [{table}] {key}")
        return value

    def resolved(self) -> dict:
        """Defaults overlaid with the file's values; what the manifest echoes."""
        out = {t: dict(v) for t, v in DEFAULTS.items()}
        for table, values in self.tables.items():
            out.setdefault(table, {}).update(values)
        return out


def _validate(raw: dict, path) -> None:
    for table, values in raw.items():
        if table not in SCHEMA:
            raise ConfigError(f"{path}: unknown table [{table}]")
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: [{table}] must be a table")
        for key, value in values.items():
            if key not in SCHEMA[table]:
                raise ConfigError(f"{path}: unknown key [{table}] {key}")
            expected = SCHEMA[table][key]
            if expected is _BOOL:
                ok = isinstance(value, bool)
            elif expected is _INT:
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif expected is _STR_LIST:
                ok = isinstance(value, list) and all(isinstance(v, str) for v in value)
            elif expected is _STR:
                ok = isinstance(value, str)
            else:  # float accepts int
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if not ok:
                raise ConfigError(f"{path}: [{table}] {key} has the wrong type")


def load_config(path) -> RunConfig:
    """Parse a TOML config, or the manifest JSON a previous run emitted."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        raw = manifest.get("config", manifest)
    else:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    _validate(raw, path)
    return RunConfig(tables=raw, source_path=str(path))


def write_manifest(config: RunConfig, out_dir: Path, command: str, overrides: dict) -> Path:
    manifest = {
        "command": command,
        "config": config.resolved(),
        "overrides": overrides,
        "source_config": config.source_path,
    }
    out_path = out_dir / "manifest.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return out_path
