"""Experiment configuration: a flat, self-describing key-value file.

Format: one `key = value` pair per line, `#` starts a comment, blank
lines ignored.  Values are parsed as int, float, bool ("true"/"false")
or string (optionally double-quoted); every file must carry
`schema_version = 1`.  Unknown keys are rejected so typos fail loudly.

Verdict thresholds live in the config (with documented defaults), never
in code paths, so a report's pass/fail is fully determined by the file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields

from ..errors import ConfigError

__all__ = ["ExperimentConfig", "parse_config_file", "parse_config_text", "config_from_dict"]

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    "e2-sweep",
    "double-commutator-sweep",
    "decomposition-check",
    "limit-residuals",
    "theorem3-sweep",
    "moment-check",
    "spde-run",
    "apriori-mc",
)

_KIND_FOR_COMMAND = {
    "sweep": ("e2-sweep", "double-commutator-sweep"),
    "check-identities": ("decomposition-check",),
    "limits": ("limit-residuals",),
    "theorem3": ("theorem3-sweep",),
    "moments": ("moment-check",),
    "simulate": ("spde-run",),
    "apriori": ("apriori-mc",),
}


@dataclass
class ExperimentConfig:
    """Validated, fully-defaulted experiment description."""

    experiment: str
    d: int = 1
    N: int = 256
    m: int = 1
    sigma_preset: str = "trig"
    sigma_seed: int = 0
    u_preset: str = "trig"
    u_seed: int = 0
    p: float = 2.0
    q: float = 1.0
    entropy: str = "quadratic"
    entropy_q: float = 2.0
    phi_preset: str = "constant 1"
    kernel: str = "bump"
    delta_min_k: int = 2
    delta_max_k: int = 6
    backend: str = "spectral"
    dealias: bool = False
    seed: int = 0
    out_dir: str = "out"
    oracle_check: bool = False
    # verdict thresholds (config-owned, defaults documented here)
    degenerate_abs_tol: float = 1.0e-12
    identity_rtol: float = 1.0e-10
    require_monotone: bool = True
    final_over_initial_max: float = 0.1
    slope_target: float = 2.0
    slope_tol: float = 0.3
    moment_pair_tol: float = 5.0e-3
    moment_band_factor: float = 1.5
    moment_pair_min_ratio: float = 16.0
    limit_verdict: str = "slope"
    # spde-specific
    scheme: str = "ito"
    drift: str = "zero"
    horizon: float = 0.1
    steps: int = 1024
    paths_count: int = 4
    dt: float = 0.0  # 0 means horizon/steps
    snapshot_stride: int = 0
    mass_tol: float = 1.0e-12
    blowup_bound: float = 100.0
    apriori_rtol: float = 1.0e-12

    def delta_ks(self):
        return list(range(self.delta_min_k, self.delta_max_k + 1))


_FIELD_TYPES = {f.name: f.type for f in dc_fields(ExperimentConfig)}
_DEFAULTS = {
    f.name: f.default for f in dc_fields(ExperimentConfig) if f.default is not field
}


def _parse_scalar(raw: str):
    s = raw.strip()
    if len(s) >= 2 and s[0] == '"' and s[-1] == '"':
        return s[1:-1]
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def parse_config_text(text: str) -> dict:
    """Parse the key-value format into a raw dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_scalar(raw)
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping and build an ExperimentConfig."""
    raw = dict(raw)
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    if "experiment" not in raw:
        raise ConfigError("missing required key 'experiment'")
    kind = raw["experiment"]
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"unknown experiment {kind!r}; expected one of {', '.join(EXPERIMENT_KINDS)}"
        )
    unknown = set(raw) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    coerced = {}
    for key, value in raw.items():
        want = _FIELD_TYPES[key]
        if want in ("int", int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"key {key!r} must be an integer, got {value!r}")
        elif want in ("float", float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"key {key!r} must be a number, got {value!r}")
            value = float(value)
        elif want in ("bool", bool):
            if not isinstance(value, bool):
                raise ConfigError(f"key {key!r} must be true/false, got {value!r}")
        else:
            if not isinstance(value, str):
                raise ConfigError(f"key {key!r} must be a string, got {value!r}")
        coerced[key] = value
    cfg = ExperimentConfig(**coerced)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.d not in (1, 2, 3):
        raise ConfigError(f"d must be 1, 2 or 3, got {cfg.d}")
    if cfg.N < 16 or (cfg.N & (cfg.N - 1)) != 0:
        raise ConfigError(f"N must be a power of two >= 16, got {cfg.N}")
    if cfg.m < 1:
        raise ConfigError(f"m must be >= 1, got {cfg.m}")
    if cfg.p < 2 or cfg.q < 1 or cfg.q > cfg.p:
        raise ConfigError(f"need p >= 2 and 1 <= q <= p, got p={cfg.p}, q={cfg.q}")
    if cfg.delta_min_k < 2 or cfg.delta_max_k < cfg.delta_min_k:
        raise ConfigError(
            f"delta ladder must satisfy 2 <= min_k <= max_k, got "
            f"{cfg.delta_min_k}..{cfg.delta_max_k}"
        )
    ladder_floor = 2.0 ** (-cfg.delta_max_k)
    if ladder_floor < 8.0 / cfg.N * (1 - 1e-12):
        raise ConfigError(
            f"delta ladder bottom 2^-{cfg.delta_max_k} under-resolves N={cfg.N} "
            f"(needs delta >= 8h = {8.0 / cfg.N})"
        )
    if cfg.backend not in ("spectral", "centered2"):
        raise ConfigError(f"backend must be 'spectral' or 'centered2', got {cfg.backend!r}")
    if cfg.kernel not in ("bump", "truncated-gaussian"):
        raise ConfigError(f"kernel must be 'bump' or 'truncated-gaussian', got {cfg.kernel!r}")
    if cfg.limit_verdict not in ("slope", "monotone"):
        raise ConfigError(f"limit_verdict must be 'slope' or 'monotone', got {cfg.limit_verdict!r}")
    if cfg.experiment in ("spde-run", "apriori-mc"):
        if cfg.horizon <= 0 or cfg.steps < 1:
            raise ConfigError("spde experiments need horizon > 0 and steps >= 1")
        if cfg.experiment == "apriori-mc" and cfg.paths_count < 2:
            raise ConfigError("apriori-mc needs paths_count >= 2")
        if cfg.drift not in ("zero", "linear-divergence"):
            raise ConfigError(f"drift must be 'zero' or 'linear-divergence', got {cfg.drift!r}")
        if cfg.scheme not in ("ito", "stratonovich-heun"):
            raise ConfigError(f"scheme must be 'ito' or 'stratonovich-heun', got {cfg.scheme!r}")
    for key in ("degenerate_abs_tol", "identity_rtol", "final_over_initial_max",
                "moment_pair_tol", "moment_band_factor", "slope_tol"):
        if getattr(cfg, key) <= 0 or not math.isfinite(getattr(cfg, key)):
            raise ConfigError(f"threshold {key} must be positive and finite")


def parse_config_file(path) -> ExperimentConfig:
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(parse_config_text(text))


def kinds_for_command(command: str):
    return _KIND_FOR_COMMAND[command]
