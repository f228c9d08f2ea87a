"""Flat ``section.key = value`` run configuration.

Every key has a typed default; files and ``--set`` overrides may only name
existing keys. ``RunConfig.to_text()`` renders the fully resolved config in
the same syntax so each run directory is self-describing.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .flsim import PERSONALIZATION_MODES, FederationConfig
from .spectral import FrequencyBand
from .trigger import TRIGGER_KINDS, TriggerConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    path: str = ""
    test_path: str = ""
    n_per_class: int = 250
    n_test_per_class: int = 100
    n_classes: int = 4
    height: int = 16
    width: int = 16
    channels: int = 1
    contrast: float = 0.2
    noise_std: float = 0.1


@dataclass
class PartitionSection:
    alpha: float = 0.5


@dataclass
class FedSection:
    n_clients: int = 20
    malicious_fraction: float = 0.1
    rounds: int = 50
    sample_fraction: float = 0.5
    local_steps: int = 15
    lr: float = 0.1
    batch_size: int = 32
    personalization: str = "fedbn"
    hidden_dim: int = 64
    attacker_personal: str = "full"
    workers: int = 1


@dataclass
class TriggerSection:
    kind: str = "dcinject"
    delta: float = 0.75
    epsilon: str = "auto"
    rho: float = 0.5
    use_mfreq: bool = True
    use_whvs: bool = True
    use_scale: bool = True
    target_label: int = 0
    poison_ratio: float = 0.5
    patch_side: int = 3
    patch_value: float = 1.0
    seed: str = "auto"


@dataclass
class ReportSection:
    # wall-clock seconds break byte-identical results; off by default
    wall_time: bool = False


@dataclass
class AblateSection:
    grid: str = "components,alpha"
    repeats: int = 1
    alphas: str = "0.1,0.5,1.0,10.0"


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    data: DataSection = field(default_factory=DataSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    fed: FedSection = field(default_factory=FedSection)
    trigger: TriggerSection = field(default_factory=TriggerSection)
    report: ReportSection = field(default_factory=ReportSection)
    ablate: AblateSection = field(default_factory=AblateSection)

    def items(self) -> list[tuple[str, object]]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if is_dataclass(value):
                out.extend((f"{f.name}.{g.name}", getattr(value, g.name)) for g in fields(value))
            else:
                out.append((f.name, value))
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.items())

    def config_hash(self, exclude=("seed", "out")) -> str:
        text = "".join(f"{k} = {_render(v)}\n" for k, v in self.items() if k not in exclude)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        cfg = replace(self, **{f.name: replace(getattr(self, f.name)) for f in fields(self)
                               if is_dataclass(getattr(self, f.name))})
        for key, raw in pairs.items():
            _set(cfg, key, raw)
        return cfg

    def trigger_config(self) -> TriggerConfig:
        t = self.trigger
        return TriggerConfig(
            delta=t.delta,
            epsilon=None if t.epsilon == "auto" else float(t.epsilon),
            band=FrequencyBand(t.rho),
            use_mfreq=t.use_mfreq,
            use_whvs=t.use_whvs,
            use_scale=t.use_scale,
            target_label=t.target_label,
            poison_ratio=t.poison_ratio,
            seed=self.seed if t.seed == "auto" else int(t.seed),
            kind=t.kind,
            patch_side=t.patch_side,
            patch_value=t.patch_value,
        )

    def federation_config(self) -> FederationConfig:
        f = self.fed
        return FederationConfig(
            n_clients=f.n_clients,
            malicious_fraction=f.malicious_fraction,
            rounds=f.rounds,
            sample_fraction=f.sample_fraction,
            local_steps=f.local_steps,
            lr=f.lr,
            batch_size=f.batch_size,
            personalization=f.personalization,
            hidden_dim=f.hidden_dim,
            attacker_personal=f.attacker_personal,
            trigger=self.trigger_config(),
            seed=self.seed,
        )

    def validate(self) -> "RunConfig":
        d = self.data
        if min(d.n_per_class, d.n_test_per_class, d.n_classes, d.height, d.width) < 1:
            raise ConfigError("data sizes and n_classes must be positive")
        if d.channels not in (1, 3):
            raise ConfigError("data.channels must be 1 or 3")
        if d.contrast < 0 or d.noise_std < 0:
            raise ConfigError("data.contrast and data.noise_std must be nonnegative")
        if not self.partition.alpha > 0:
            raise ConfigError("partition.alpha must be positive")
        if self.fed.personalization not in PERSONALIZATION_MODES:
            raise ConfigError(f"fed.personalization must be one of {PERSONALIZATION_MODES}")
        if self.trigger.kind not in TRIGGER_KINDS:
            raise ConfigError(f"trigger.kind must be one of {TRIGGER_KINDS}")
        if self.fed.workers < 1:
            raise ConfigError("fed.workers must be >= 1")
        if self.ablate.repeats < 1:
            raise ConfigError("ablate.repeats must be >= 1")
        grids = [g for g in self.ablate.grid.split(",") if g]
        if not grids or any(g not in ("components", "alpha") for g in grids):
            raise ConfigError("ablate.grid must list 'components' and/or 'alpha'")
        try:
            alphas = self.sweep_alphas()
        except ValueError:
            raise ConfigError("ablate.alphas must be comma-separated numbers") from None
        if any(a <= 0 for a in alphas):
            raise ConfigError("ablate.alphas must be positive")
        try:
            self.federation_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.data.path == "" and self.trigger.target_label >= d.n_classes:
            raise ConfigError("trigger.target_label must be below data.n_classes")
        return self

    def sweep_alphas(self) -> list[float]:
        return [float(a) for a in self.ablate.alphas.split(",") if a.strip()]


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, raw: str, current):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(current).__name__}") from None
    if key == "trigger.epsilon" and raw != "auto":
        try:
            if float(raw) < 0:
                raise ValueError
        except ValueError:
            raise ConfigError("trigger.epsilon must be 'auto' or a nonnegative number") from None
    if key == "trigger.seed" and raw != "auto":
        try:
            int(raw)
        except ValueError:
            raise ConfigError("trigger.seed must be 'auto' or an integer") from None
    return raw


def _set(cfg: RunConfig, key: str, raw: str) -> None:
    parts = key.strip().split(".")
    target = cfg
    for name in parts[:-1]:
        sub = getattr(target, name, None)
        if not is_dataclass(sub):
            raise ConfigError(f"unknown config key {key!r}")
        target = sub
    leaf = parts[-1]
    names = {f.name for f in fields(target)}
    if leaf not in names or is_dataclass(getattr(target, leaf)):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(target, leaf, _coerce(key, raw, getattr(target, leaf)))


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        pairs[key] = value
    return pairs


def load_config(path=None, overrides=(), seed: int | None = None, out: str | None = None) -> RunConfig:
    pairs: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        pairs.update(parse_pairs(text, str(path)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    if seed is not None:
        pairs["seed"] = str(seed)
    if out is not None:
        pairs["out"] = out
    return RunConfig().with_overrides(pairs).validate()
