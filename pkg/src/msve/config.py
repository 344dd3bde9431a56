"""Run configuration: a flat TOML file of tables, plus command-line overrides.

Every key can be overridden with ``--set section.key=value`` (or the bare
key when unambiguous).  The fully resolved config is copied into the run
directory so any run can be reproduced from its output alone.
"""

import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .env import EnvClass, make_slope_class
from .errors import ConfigError
from .finetune import FinetuneConfig
from .pretrain import PretrainConfig

_INT, _FLOAT, _BOOL, _STR, _INT_LIST = "int", "float", "bool", "str", "int_list"

SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "run": {
        "seed": (_INT, 0),
        "out_dir": (_STR, "runs/latest"),
        "workers": (_INT, 1),
    },
    "env": {
        "horizon": (_INT, 150),
        "slope_magnitude": (_FLOAT, 0.05),
        "max_step": (_FLOAT, 0.25),
        "side": (_FLOAT, 10.0),
        "room_side": (_FLOAT, 4.375),
        "hallway_width": (_FLOAT, 1.0),
        "wall_inset": (_FLOAT, 1e-3),
    },
    "pretrain": {
        "epochs": (_INT, 150),
        "batch_size": (_INT, 20),
        "strategy": (_STR, "cvar"),
        "alpha_percentile": (_INT, 4),
        "dynamic_alpha": (_BOOL, False),
        "kl_threshold": (_FLOAT, 15.0),
        "curiosity_enabled": (_BOOL, False),
        "curiosity_weight": (_FLOAT, 0.1),
        "learning_rate": (_FLOAT, 3e-4),
        "max_inner_steps": (_INT, 30),
        "weight_cap": (_FLOAT, 2.0),
        "pdf_temperature": (_FLOAT, 1.0),
        "k_neighbors": (_INT, 4),
        "policy_hidden": (_INT_LIST, [64, 64]),
        "initial_log_std": (_FLOAT, -0.5),
        "policy_mean_scale": (_FLOAT, 0.5),
        "model_hidden": (_INT_LIST, [64, 64]),
        "model_epochs": (_INT, 8),
        "model_minibatch": (_INT, 256),
        "model_learning_rate": (_FLOAT, 1e-3),
        "checkpoint_interval": (_INT, 50),
    },
    "finetune": {
        "goals": (_INT, 5),
        "epochs_total": (_INT, 400),
        "episodes_per_epoch": (_INT, 20),
        "eval_episodes": (_INT, 10),
        "kl_threshold": (_FLOAT, 15.0),
        "learning_rate": (_FLOAT, 1e-3),
        "max_inner_steps": (_INT, 30),
        "goal_radius": (_FLOAT, 0.5),
        "discount": (_FLOAT, 0.99),
    },
    "metrics": {
        "grid_cells": (_INT, 50),
    },
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(section: str, key: str, kind: str, value) -> object:
    """Convert a TOML value or override string to the schema type."""
    try:
        if kind == _INT:
            if isinstance(value, bool):
                raise ValueError("boolean is not an integer")
            return int(value)
        if kind == _FLOAT:
            return float(value)
        if kind == _BOOL:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind == _STR:
            return str(value)
        if kind == _INT_LIST:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return [int(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {section}.{key}: {exc}") from None
    raise ConfigError(f"field {section}.{key}: unknown schema kind {kind}")


@dataclass
class RunConfig:
    """Validated configuration values, grouped by section."""

    values: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls(values={s: {k: v for k, (_, v) in fields.items()} for s, fields in SCHEMA.items()})

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        """Read a TOML config file over the defaults; None means pure defaults."""
        cfg = cls.defaults()
        if path is None:
            return cfg
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "rb") as f:
            try:
                parsed = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        for section, entries in parsed.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(entries, dict):
                raise ConfigError(f"top-level key {section!r} must be a table")
            for key, value in entries.items():
                cfg.set_value(section, key, value)
        return cfg

    def set_value(self, section: str, key: str, value) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config field {section}.{key}")
        kind, _ = SCHEMA[section][key]
        self.values[section][key] = _coerce(section, key, kind, value)

    def apply_override(self, assignment: str) -> None:
        """Apply one 'section.key=value' (or unique bare 'key=value') override."""
        if "=" not in assignment:
            raise ConfigError(f"override must look like key=value, got {assignment!r}")
        key, value = assignment.split("=", 1)
        key = key.strip()
        if "." in key:
            section, field_name = key.split(".", 1)
        else:
            hits = [s for s in SCHEMA if key in SCHEMA[s]]
            if not hits:
                raise ConfigError(f"unknown config field {key}")
            if len(hits) > 1:
                raise ConfigError(
                    f"field {key} is ambiguous across sections {hits}; qualify it as section.{key}"
                )
            section, field_name = hits[0], key
        self.set_value(section, field_name, value.strip())

    def dump_toml(self, path: str) -> None:
        """Write the fully resolved config."""
        lines = []
        for section, entries in self.values.items():
            lines.append(f"[{section}]")
            for key, value in entries.items():
                lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        with open(path, "w") as f:
            f.write("\n".join(lines))

    # --- typed views ---------------------------------------------------------

    def env_class(self) -> EnvClass:
        e = self.values["env"]
        return make_slope_class(
            horizon=e["horizon"],
            slope_magnitude=e["slope_magnitude"],
            max_step=e["max_step"],
            side=e["side"],
            room_side=e["room_side"],
            hallway_width=e["hallway_width"],
            wall_inset=e["wall_inset"],
        )

    def pretrain_config(self) -> PretrainConfig:
        p = dict(self.values["pretrain"])
        p["policy_hidden"] = tuple(p["policy_hidden"])
        p["model_hidden"] = tuple(p["model_hidden"])
        return PretrainConfig(
            seed=self.values["run"]["seed"],
            workers=self.values["run"]["workers"],
            **p,
        )

    def finetune_config(self) -> FinetuneConfig:
        return FinetuneConfig(
            seed=self.values["run"]["seed"],
            workers=self.values["run"]["workers"],
            **self.values["finetune"],
        )

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def out_dir(self) -> str:
        return self.values["run"]["out_dir"]

    @property
    def grid_cells(self) -> int:
        return self.values["metrics"]["grid_cells"]


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return "[" + ", ".join(str(v) for v in value) + "]"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'
