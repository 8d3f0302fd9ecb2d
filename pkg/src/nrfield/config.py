"""Run configuration: a sectioned INI document with a strict, typed schema.

A run file has up to six sections — ``[data]``, ``[model]``, ``[encoding]``,
``[train]``, ``[eval]``, ``[sdf]`` — and every key is checked against the
schema below so a typo fails loudly with the offending name instead of
silently falling back to a default.  ``schema_version`` (in ``[data]``)
guards against stale files; version 1 is current.

Values stay as plain parsed scalars here; translating them into model,
encoding, and training configurations happens in the builder helpers so the
command-line layer can apply its flag-over-config precedence first.
"""

from __future__ import annotations

import configparser
import dataclasses
import os

from .encodings import EncodingSpec
from .models import ARCHITECTURES, ModelConfig, default_config
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_run_config",
    "model_config_from",
    "train_config_from",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed run configuration (unknown key, bad value, bad version)."""


def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float(raw: str) -> float:
    return float(raw)


def _parse_str(raw: str) -> str:
    return raw.strip()


def _parse_tokens(raw: str) -> tuple[str, ...]:
    return tuple(raw.split())


# section -> key -> value parser
_SCHEMA = {
    "data": {
        "schema_version": _parse_int,
        "path": _parse_str,
        "format": _parse_str,  # auto | pgm | points | tetmesh
        "values": _parse_tokens,  # subset of value columns to keep
    },
    "model": {
        "architecture": _parse_str,
        "layers": _parse_int,
        "width": _parse_int,
        "activation": _parse_str,
        "omega0": _parse_float,
        "mfn_input_scale": _parse_float,
        "mfn_gamma": _parse_float,
    },
    "encoding": {
        "kind": _parse_str,
        "L": _parse_int,
        "bandwidth": _parse_float,
        "rules": _parse_tokens,
        "levels": _parse_int,
        "features": _parse_int,
        "log2_table": _parse_int,
        "base_resolution": _parse_int,
        "fine_resolution": _parse_int,
        "aux": _parse_int,
    },
    "train": {
        "iterations": _parse_int,
        "batch_size": _parse_int,
        "lr": _parse_float,
        "seed": _parse_int,
        "log_every": _parse_int,
        "smooth_window": _parse_int,
        "component_mask": _parse_tokens,  # component names or indices
    },
    "eval": {
        "grid": _parse_int,
        "mesh": _parse_str,
        "timestep": _parse_int,
        "time_value": _parse_float,
        "vnorm_components": _parse_tokens,
    },
    "sdf": {
        "mesh": _parse_str,
        "scenario": _parse_str,
        "size": _parse_str,
        "delta": _parse_float,
        "grid": _parse_int,
    },
}

_FORMATS = ("auto", "pgm", "points", "tetmesh")


@dataclasses.dataclass
class RunConfig:
    """Parsed run file: one dict of typed values per section."""

    data: dict = dataclasses.field(default_factory=dict)
    model: dict = dataclasses.field(default_factory=dict)
    encoding: dict = dataclasses.field(default_factory=dict)
    train: dict = dataclasses.field(default_factory=dict)
    eval: dict = dataclasses.field(default_factory=dict)
    sdf: dict = dataclasses.field(default_factory=dict)
    base_dir: str = "."

    def resolve_path(self, p: str) -> str:
        """Paths in the run file are relative to the file itself."""
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)


def load_run_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (the encoding key "L")
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    if cp.defaults():
        raise ConfigError(f"{path}: [DEFAULT] section is not supported")
    out = RunConfig(base_dir=os.path.dirname(os.path.abspath(path)))
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{path}: unknown config section [{section}]; expected one of {list(_SCHEMA)}"
            )
        schema = _SCHEMA[section]
        parsed = {}
        for key, raw in cp.items(section):
            if key not in schema:
                raise ConfigError(
                    f"{path}: unknown config key '{key}' in [{section}]; "
                    f"expected one of {sorted(schema)}"
                )
            try:
                parsed[key] = schema[key](raw)
            except ValueError:
                raise ConfigError(f"{path}: bad value for [{section}] {key}: {raw!r}") from None
        setattr(out, section, parsed)
    version = out.data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: schema_version {version} not supported (current is {SCHEMA_VERSION})"
        )
    fmt = out.data.get("format", "auto")
    if fmt not in _FORMATS:
        raise ConfigError(f"{path}: [data] format must be one of {_FORMATS}, got {fmt!r}")
    return out


def model_config_from(run: RunConfig, in_dim: int, out_dim: int, seed: int) -> ModelConfig:
    """Build the architecture configuration from [model] + [encoding]."""
    model = dict(run.model)
    arch = model.pop("architecture", None)
    if arch is None:
        raise ConfigError("config missing [model] architecture")
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown [model] architecture {arch!r}; one of {ARCHITECTURES}")
    overrides = dict(model)
    if run.encoding:
        enc = dict(run.encoding)
        kind = enc.pop("kind", None)
        if kind is None:
            # partial overrides on the architecture's default encoding
            base = default_config(arch, in_dim, out_dim).encoding
            try:
                overrides["encoding"] = dataclasses.replace(base, **enc)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad [encoding] section: {e}") from None
        else:
            try:
                overrides["encoding"] = EncodingSpec(kind=kind, **enc)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad [encoding] section: {e}") from None
    try:
        return default_config(arch, in_dim, out_dim, seed=seed, **overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [model]/[encoding] configuration: {e}") from None


def resolve_component_mask(tokens, value_names) -> tuple[int, ...] | None:
    """Mask tokens (names or integer indices) -> component index tuple."""
    if tokens is None:
        return None
    idx = []
    for tok in tokens:
        try:
            i = int(tok)
        except ValueError:
            if tok not in value_names:
                raise ConfigError(
                    f"component_mask entry {tok!r} not in value components {list(value_names)}"
                ) from None
            i = value_names.index(tok)
        if not 0 <= i < len(value_names):
            raise ConfigError(f"component_mask index {i} out of range for {len(value_names)} components")
        idx.append(i)
    if not idx:
        return None
    return tuple(idx)


def train_config_from(
    run: RunConfig,
    seed: int,
    value_names,
    checkpoint_path: str | None = None,
) -> TrainConfig:
    """Build the optimization configuration from [train] with the final seed."""
    t = dict(run.train)
    t.pop("seed", None)  # precedence already applied by the caller
    mask = resolve_component_mask(t.pop("component_mask", None), tuple(value_names))
    try:
        return TrainConfig(seed=seed, component_mask=mask, checkpoint_path=checkpoint_path, **t)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [train] configuration: {e}") from None
