"""Flat key=value run configuration shared by the CLI subcommands.

One namespace covers scene synthesis, training, and ablation so a single
file (plus command-line overrides) pins an entire run. Unknown keys are
rejected rather than ignored; silent typos in experiment configs are how
results stop being reproducible.
"""

import dataclasses
from dataclasses import dataclass


class ConfigError(Exception):
    """Bad key, bad value, or unreadable config file."""


@dataclass
class RunConfig:
    # scene and camera
    seed: int = 7
    width: int = 64
    height: int = 64
    focal: float = 0.0  # pixels; 0 resolves to 1.3 * width
    distance: float = 3.0
    background: float = 0.05
    n_face: int = 160
    n_mouth: int = 40
    # animation
    frames: int = 120
    period: int = 24
    fps: int = 25
    holdout_every: int = 6
    audio: str = ""  # optional wav path; empty synthesizes a tone
    tone_freq: float = 220.0
    # model
    n_members: int = 10
    hidden: int = 64
    d_state: int = 32
    head_gain: float = 0.1
    fusion_mode: str = "uncertainty"
    # optimization
    stage_a_iters: int = 2000
    stage_b_iters: int = 500
    lr: float = 0.001
    lr_planes: float = 0.01
    lam: float = 0.5
    gamma: float = 0.2
    # ablation
    corrupt_view: str = ""  # empty disables feature corruption
    corrupt_sigma: float = 1.0
    seeds: str = "7,8,9"

    def resolved_focal(self) -> float:
        return self.focal if self.focal > 0.0 else 1.3 * self.width

    def seed_list(self):
        try:
            return [int(s) for s in self.seeds.split(",") if s.strip() != ""]
        except ValueError:
            raise ConfigError(f"seeds must be comma-separated integers: {self.seeds!r}")


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}")


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    updates = {}
    for key, raw in overrides.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key: {key}")
        updates[key] = _parse_value(key, str(raw))
    cfg = dataclasses.replace(cfg, **updates)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    positive = ("width", "height", "distance", "frames", "period", "fps",
                "n_members", "hidden", "d_state", "lr", "lr_planes")
    for key in positive:
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{key} must be positive, got {getattr(cfg, key)}")
    nonneg = ("stage_a_iters", "stage_b_iters", "lam", "gamma",
              "corrupt_sigma", "n_face", "n_mouth")
    for key in nonneg:
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be >= 0, got {getattr(cfg, key)}")
    if cfg.fusion_mode not in ("uncertainty", "uniform"):
        raise ConfigError(f"fusion_mode must be uncertainty or uniform: {cfg.fusion_mode!r}")
    if cfg.holdout_every < 2:
        raise ConfigError("holdout_every must be >= 2")
    if not 0.0 <= cfg.background <= 1.0:
        raise ConfigError("background must be in [0, 1]")
    if cfg.n_members < 2:
        raise ConfigError("n_members must be >= 2")


def load_config_file(path) -> dict:
    """Read key=value lines; '#' starts a comment, blank lines are skipped."""
    overrides = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}")
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def make_config(config_path=None, overrides=None) -> RunConfig:
    """Defaults, then config-file values, then command-line overrides."""
    cfg = RunConfig()
    if config_path:
        cfg = apply_overrides(cfg, load_config_file(config_path))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    validate(cfg)
    return cfg


def config_lines(cfg: RunConfig):
    out = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        # repr of a float round-trips exactly; strings go through verbatim
        text = value if isinstance(value, str) else repr(value)
        out.append(f"{f.name}={text}")
    return out


def write_config(path, cfg: RunConfig):
    with open(path, "w") as fh:
        fh.write("\n".join(config_lines(cfg)) + "\n")


def read_config(path) -> RunConfig:
    """Inverse of `write_config`; round-trips every field exactly."""
    return make_config(config_path=path)
