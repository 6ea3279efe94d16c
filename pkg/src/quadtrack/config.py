"""Run configuration: flat ``key = value`` text in sections, every default embedded."""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import UsageError
from .tracker import TrackerConfig

MATCHING_CHOICES = {"agd-agd": "agd", "eagd-agd": "eagd"}
DESCRIPTOR_CHOICES = ("appearance", "geometry", "agd")

# section -> keys, in print order
_LAYOUT = {
    "tracker": ("theta_l", "theta_m", "theta_h", "tau", "top_k", "max_missed"),
    "detection": ("nms_iou", "stride"),
    "descriptor": ("descriptor", "matching", "use_convlstm", "seed"),
    "model": ("head_params", "embed_params", "gru_params", "convlstm_params"),
}


@dataclass(frozen=True)
class RunConfig:
    theta_l: float = 0.4
    theta_m: float = 1.0
    theta_h: float = 0.8
    tau: float = 0.05
    top_k: int = 10
    max_missed: int = 8
    nms_iou: float = 0.2
    stride: float = 4.0
    descriptor: str = "agd"
    matching: str = "agd-agd"
    use_convlstm: bool = False
    seed: int = 0
    # parameter directories (ParameterSet checkpoints); empty = seeded init
    head_params: str = ""
    embed_params: str = ""
    gru_params: str = ""
    convlstm_params: str = ""
    base_dir: str = field(default="", compare=False)

    def __post_init__(self):
        if self.descriptor not in DESCRIPTOR_CHOICES:
            raise UsageError(f"descriptor must be one of {DESCRIPTOR_CHOICES}, got {self.descriptor!r}")
        if self.matching not in MATCHING_CHOICES:
            raise UsageError(f"matching must be one of {tuple(MATCHING_CHOICES)}, got {self.matching!r}")
        if not 0.0 < self.nms_iou <= 1.0:
            raise UsageError(f"nms_iou must be in (0, 1], got {self.nms_iou}")
        if not self.stride > 0:
            raise UsageError(f"stride must be > 0, got {self.stride}")
        self.tracker_config()  # validates the tracker thresholds

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(self.theta_l, self.theta_m, self.theta_h, self.tau, self.top_k,
                             self.max_missed, MATCHING_CHOICES[self.matching])

    def resolve(self, key: str) -> Path | None:
        """Absolute path of a model parameter entry, or None when unset."""
        value = getattr(self, key)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir or ".") / p

    def check_paths(self) -> None:
        for key in _LAYOUT["model"]:
            p = self.resolve(key)
            if p is not None and not p.exists():
                raise UsageError(f"{key}: {p} does not exist")


def _parse_value(name: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {name!r}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config(text: str, base_dir: str = "") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise UsageError(f"config syntax: {e}") from None
    values = {}
    for section in cp.sections():
        if section not in _LAYOUT:
            raise UsageError(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            if key not in _LAYOUT[section]:
                raise UsageError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse_value(key, raw)
    return RunConfig(**values, base_dir=base_dir)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {p}: {e}") from None
    cfg = parse_config(text, str(p.parent))
    cfg.check_paths()
    return cfg


def format_config(cfg: RunConfig | None = None) -> str:
    cfg = cfg or RunConfig()
    values = asdict(cfg)
    out = io.StringIO()
    for section, keys in _LAYOUT.items():
        out.write(f"[{section}]\n")
        for k in keys:
            v = values[k]
            out.write(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n")
        out.write("\n")
    return out.getvalue()
