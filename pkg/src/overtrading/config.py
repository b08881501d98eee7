"""Flat ``key = value`` configuration files.

Format:

* one ``key = value`` per line; ``#`` starts a comment line;
* lists are comma separated (``lexicon_paths = a.tsv, b.tsv``);
* mappings are comma separated ``key=value`` pairs
  (``index_series = 6=sse.tsv, 0=szse.tsv, 3=szse.tsv``);
* booleans are ``true``/``false``; an empty value means "not set";
* keys starting with ``synth.`` configure the synthetic data generator;
* relative paths are resolved against the directory holding the file.
"""

import dataclasses
import datetime as dt
import typing
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    # inputs
    posts_path: str = ""
    trades_path: str = ""
    shares_path: str = ""
    calendar_path: str = ""
    fundamentals_path: str = ""
    membership_path: str = ""  # empty disables the index-effect rule
    index_series: dict[str, str] = field(default_factory=dict)  # stock-id prefix -> series file
    lexicon_paths: list[str] = field(default_factory=list)
    negation_paths: list[str] = field(default_factory=list)
    conflict_policy: str = "priority"
    bot_ids: list[str] = field(default_factory=lambda: ["Ask-Sectary Robot", "AI Summary"])
    zone: str = "Asia/Shanghai"
    # cleaning
    max_empty_share: float = 0.10
    max_suspension_days: int = 30
    # trade split and turnover
    amount_threshold: float = 200_000.0
    share_threshold: float = 100_000.0
    robust_amount_threshold: float = 500_000.0
    window: int = 20
    min_window: int = 0  # 0 means ceil(window / 2)
    baseline_mode: str = "same-slot"
    cumulative_turnover: bool = False
    turnover_formula: str = "value"
    # regimes and tiers
    regime_window: int = 105
    regime_min_phase: int = 0  # 0 means regime_window
    large_cap: float = 1e11
    small_cap: float = 1e10
    tier_date: str = ""  # fix the tier evaluation date; empty = per stock-date
    # regressions
    sentiment_measure: str = "value"
    robust_se: bool = False
    lm_lags: int = 1
    spec_base: bool = True
    spec_regimes: bool = True
    spec_tiers: bool = True
    spec_robustness: bool = True
    # run
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1

    PATH_KEYS: typing.ClassVar = (
        "posts_path", "trades_path", "shares_path", "calendar_path", "fundamentals_path",
        "membership_path", "lexicon_paths", "negation_paths", "index_series", "out_dir",
    )
    REQUIRED_PATHS: typing.ClassVar = ("posts_path", "trades_path", "shares_path", "calendar_path")
    # keys that may differ between runs without changing any output
    RUNTIME_KEYS: typing.ClassVar = ("out_dir", "threads")

    def input_paths(self) -> list[str]:
        paths = [getattr(self, k) for k in self.REQUIRED_PATHS]
        paths += [p for p in (self.fundamentals_path, self.membership_path) if p]
        return paths + list(self.lexicon_paths) + list(self.negation_paths) + list(self.index_series.values())

    def check_paths(self) -> "PipelineConfig":
        for p in self.input_paths():
            if not Path(p).exists():
                raise ConfigError(f"missing input file {p}")
        return self

    def validate(self, check_paths: bool = True) -> "PipelineConfig":
        """Check values; with ``check_paths`` also require every input file to exist."""
        for key in self.REQUIRED_PATHS:
            if not getattr(self, key):
                raise ConfigError(f"{key} is required")
        if check_paths:
            self.check_paths()
        if not self.lexicon_paths:
            raise ConfigError("lexicon_paths must name at least one dictionary")
        if not self.negation_paths:
            raise ConfigError("negation_paths must name a negation list")
        for key in ("amount_threshold", "share_threshold", "robust_amount_threshold",
                    "large_cap", "small_cap", "window", "regime_window", "lm_lags"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if self.small_cap > self.large_cap:
            raise ConfigError("small_cap must not exceed large_cap")
        if self.min_window < 0 or self.min_window > self.window:
            raise ConfigError("min_window must lie in [0, window]")
        if not 0 <= self.max_empty_share <= 1:
            raise ConfigError("max_empty_share must lie in [0, 1]")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        choices = {
            "conflict_policy": ("priority", "sum-sign"),
            "baseline_mode": ("same-slot", "rolling"),
            "turnover_formula": ("value", "shares"),
            "sentiment_measure": ("value", "total"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {', '.join(allowed)}")
        if self.tier_date:
            _parse_date(self.tier_date, "tier_date")
        return self


@dataclass
class SynthConfig:
    n_stocks: int = 100
    n_days: int = 250
    start_date: str = "2021-01-04"
    beta_inst: float = 0.13
    beta_retail: float = 0.13
    alpha: float = 0.0
    noise_sd: float = 0.2
    max_posts_per_slot: int = 2
    silent_post_share: float = 0.1
    sparse_stocks: int = 1
    suspended_stocks: int = 1
    churned_stocks: int = 1  # stocks with frequent index membership changes
    junk_rows: int = 12
    bot_posts: int = 40
    seed: int = 0

    def validate(self) -> "SynthConfig":
        for key in ("sparse_stocks", "suspended_stocks", "churned_stocks", "junk_rows", "bot_posts"):
            if getattr(self, key) < 0:
                raise ConfigError(f"synth.{key} must be >= 0")
        if not 0 <= self.silent_post_share < 1:
            raise ConfigError("synth.silent_post_share must lie in [0, 1)")
        for key in ("n_stocks", "n_days", "max_posts_per_slot"):
            if getattr(self, key) < 1:
                raise ConfigError(f"synth.{key} must be >= 1")
        for key in ("beta_inst", "beta_retail", "alpha", "noise_sd"):
            value = getattr(self, key)
            if value != value or value in (float("inf"), float("-inf")):
                raise ConfigError(f"synth.{key} must be finite")
        if self.noise_sd < 0:
            raise ConfigError("synth.noise_sd must be >= 0")
        _parse_date(self.start_date, "synth.start_date")
        return self


def _parse_date(text: str, key: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: bad date {text!r}") from exc


# ---------------------------------------------------------------------------
# parsing / serialization


def parse_flat(text: str, origin: str = "<config>") -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{n}: expected key = value")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"{origin}:{n}: duplicate key {key}")
        out[key] = value.strip()
    return out


def _convert(raw: str, kind, key: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return low == "true"
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        origin = typing.get_origin(kind)
        if origin is list:
            return [x.strip() for x in raw.split(",") if x.strip()]
        if origin is dict:
            pairs = {}
            for item in (x.strip() for x in raw.split(",") if x.strip()):
                if "=" not in item:
                    raise ValueError(f"expected key=value, got {item!r}")
                k, v = item.split("=", 1)
                pairs[k.strip()] = v.strip()
            return pairs
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    raise ConfigError(f"{key}: unsupported type {kind}")


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(value)
    if isinstance(value, dict):
        return ", ".join(f"{k}={v}" for k, v in value.items())
    return str(value)


def _build(cls, values: dict[str, str], prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        name = key[len(prefix):]
        if name not in names:
            raise ConfigError(f"unknown config key {key}")
        kwargs[name] = _convert(raw, hints[name], key)
    return cls(**kwargs)


def _resolve(cfg: PipelineConfig, base: Path) -> PipelineConfig:
    def fix(p: str) -> str:
        if not p:
            return p
        path = Path(p).expanduser()
        return str(path if path.is_absolute() else (base / path).resolve())

    for key in PipelineConfig.PATH_KEYS:
        value = getattr(cfg, key)
        if isinstance(value, list):
            setattr(cfg, key, [fix(p) for p in value])
        elif isinstance(value, dict):
            setattr(cfg, key, {k: fix(p) for k, p in value.items()})
        else:
            setattr(cfg, key, fix(value))
    return cfg


def split_values(values: dict[str, str]) -> tuple[dict[str, str], dict[str, str]]:
    synth = {k: v for k, v in values.items() if k.startswith("synth.")}
    main = {k: v for k, v in values.items() if not k.startswith("synth.")}
    return main, synth


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None,
                base_dir: str | Path | None = None) -> tuple[PipelineConfig, SynthConfig]:
    """Read a config file (optional) plus overrides; paths resolved against the file's folder."""
    values: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values = parse_flat(text, str(path))
        base = Path(path).resolve().parent
    else:
        base = Path(base_dir or ".").resolve()
    values.update(overrides or {})
    main, synth = split_values(values)
    cfg = _resolve(_build(PipelineConfig, main), base)
    return cfg, _build(SynthConfig, synth, "synth.")


def dump_config(cfg: PipelineConfig | None = None, synth: SynthConfig | None = None,
                exclude: tuple[str, ...] = ()) -> str:
    lines = []
    if cfg is not None:
        for f in dataclasses.fields(cfg):
            if f.name not in exclude:
                lines.append(f"{f.name} = {_render(getattr(cfg, f.name))}")
    if synth is not None:
        for f in dataclasses.fields(synth):
            lines.append(f"synth.{f.name} = {_render(getattr(synth, f.name))}")
    return "\n".join(lines) + "\n"
