"""Flat ``key = value`` experiment configuration with typed defaults."""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any, Callable, Optional, Union


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _path(text: str) -> Optional[str]:
    return text.strip() or None


# name -> (parser, default)
Schema = dict[str, tuple[Callable[[str], Any], Any]]

COMMON: Schema = {"seed": (int, 0)}

FORGET_GAUSSIAN: Schema = {
    "L": (float, 3.0),
    "n_retain": (int, 2000),
    "n_unlearn": (int, 2000),
    "grid_points": (int, 101),
    "mu": (float, 0.0),
    "sigma": (float, 1.0),
    "h_x": (float, 0.2),
    "h_y": (float, 0.2),
    "width": (int, 64),
    "depth": (int, 1),
    "alpha": (float, 0.5),  # retain weight of the pretraining target mixture
    "pretrain_epochs": (int, 300),
    "method": (str, "marginal"),
    "lam": (float, 0.99),
    "epochs": (int, 1500),
    "batch_size": (int, 0),  # 0: full batch
    "lr": (float, 0.01),
    "weight_decay": (float, 1e-4),
    "prior": (float, 0.5),
    "marginal_alpha": (_opt_float, None),  # None: n_retain / (n_retain + n_unlearn)
    "c_max": (float, 20.0),
    "trace_every": (int, 50),
    "tv_threshold": (float, 0.1),
}

UNLEARN: Schema = {
    "retain": (_path, None),
    "unlearn": (_path, None),
    "model": (_path, None),
    "n_classes": (int, 0),
    "synthetic_classes": (int, 3),
    "synthetic_per_class": (int, 400),
    "synthetic_spread": (float, 1.0),
    "remove_class": (int, 2),
    "hidden": (_int_list, (16,)),
    "pretrain_epochs": (int, 20),
    "method": (str, "marginal_mi"),
    "lam": (float, 0.9),
    "epochs": (int, 15),
    "batch_size": (int, 64),
    "lr": (float, 1e-3),
    "weight_decay": (float, 1e-4),
    "alpha": (_opt_float, None),
    "prior": (float, 0.5),
    "c_max": (float, 20.0),
    "stop_rule": (str, "none"),
    "stop_threshold": (float, 0.85),
    "stop_margin": (float, 0.02),
    "patience": (int, 0),  # 0: the rule's own default
    "min_epochs": (int, 1),
    "val_fraction": (float, 0.2),
    "epsilon": (float, 1.0),
}

FEATURE_UNLEARN: Schema = {
    "data": (_path, None),
    "n_classes": (int, 0),
    "synthetic_n": (int, 2000),
    "synthetic_corr": (float, 0.6),
    "hidden": (_int_list, (16,)),
    "lams": (_float_list, (0.0, 0.3, 0.6, 0.9)),
    "epochs": (int, 30),
    "batch_size": (int, 128),
    "lr": (float, 3e-3),
    "weight_decay": (float, 1e-4),
    "test_fraction": (float, 0.3),
    "dp_tolerance": (float, 0.02),
}

BARYCENTER: Schema = {
    "data": (_path, None),
    "synthetic_n": (int, 500),
    "synthetic_shift": (float, 4.0),
    "tol": (float, 1e-10),
    "max_iter": (int, 100),
    "mode": (str, "coordinate"),
    "reg": (_opt_float, None),
    "bins": (int, 20),
}

AUDIT: Schema = {
    "outputs": (_path, None),
    "epsilon": (float, 1.0),
    "bins": (int, 20),
    "prior": (float, 0.5),
}

SCHEMAS: dict[str, Schema] = {
    "forget-gaussian": FORGET_GAUSSIAN,
    "unlearn": UNLEARN,
    "feature-unlearn": FEATURE_UNLEARN,
    "barycenter": BARYCENTER,
    "audit": AUDIT,
}

PATH_KEYS = ("retain", "unlearn", "model", "data", "outputs")


def parse_text(text: str) -> dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#", ";"), delimiters=("=",)
    )
    parser.optionxform = str  # keep key case (L is upper-case)
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return dict(parser["run"])


def load_config(
    command: str,
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    """Typed settings for ``command``: defaults, then the file, then overrides.

    Relative input paths are resolved against the config file's directory.
    """
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = {**COMMON, **SCHEMAS[command]}
    raw: dict[str, str] = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        raw = parse_text(p.read_text(encoding="utf-8"))
        base = p.resolve().parent
    cfg = {k: default for k, (_, default) in schema.items()}
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {command}")
        parse, _ = schema[key]
        try:
            cfg[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {command}")
        cfg[key] = value
    for key in PATH_KEYS:
        if cfg.get(key):
            resolved = Path(cfg[key])
            if not resolved.is_absolute():
                resolved = base / resolved
            if not resolved.is_file():
                raise ConfigError(f"{key} file not found: {resolved}")
            cfg[key] = str(resolved)
    if cfg["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    return cfg
