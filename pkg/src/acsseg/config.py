"""Experiment configuration: typed schema, INI-style file format, validation.

A config file is sectioned ``key = value`` text (configparser grammar).
Sections and keys mirror the dataclasses below; ``--set section.key=value``
overrides from the CLI win over file values.  ``resolved_text`` serializes a
config back to that grammar so a snapshot alone can re-run an experiment.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, replace

from .errors import ConfigError

ENCODER_VARIANTS = ("resnet34_shape", "tiny")
ABLATIONS = ("baseline", "lca", "lca_gcm", "full")
NORMS = ("batch", "group")
SPLIT_MODES = ("none", "random")

STAGE_CHANNELS = {
    "resnet34_shape": (64, 64, 128, 256, 512),
    "tiny": (16, 32, 64, 128, 256),
}
DECODER_CHANNELS = {
    "resnet34_shape": (256, 128, 64, 64, 32),  # d5..d1
    "tiny": (128, 64, 32, 32, 16),
}
GCM_BRANCH_CHANNELS = {"resnet34_shape": 64, "tiny": 16}
SE_REDUCTION = {"resnet34_shape": 16, "tiny": 4}


@dataclass(frozen=True)
class PolySchedule:
    """Polynomial learning-rate decay: lr = init_lr * (1 - epoch/n_epoch)^power."""

    init_lr: float = 0.001
    power: float = 0.9
    n_epoch: int = 150

    def lr_at(self, epoch: int) -> float:
        if not 0 <= epoch <= self.n_epoch:
            raise ConfigError(
                f"epoch {epoch} outside schedule range [0, {self.n_epoch}]"
            )
        return self.init_lr * (1.0 - epoch / self.n_epoch) ** self.power


@dataclass(frozen=True)
class LossConfig:
    bce_weight: float = 1.0
    dice_weight: float = 1.0
    smooth: float = 1.0
    scale_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)  # s5..s1


@dataclass(frozen=True)
class AugmentSpec:
    """Geometric augmentation ranges; flips are probabilities, the rest bounds."""

    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rotation_max_deg: float = 30.0
    zoom_range: tuple[float, float] = (0.85, 1.25)
    shift_max_frac: float = 0.1

    @staticmethod
    def disabled() -> "AugmentSpec":
        return AugmentSpec(0.0, 0.0, 0.0, (1.0, 1.0), 0.0)


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic blob-dataset parameters."""

    count: int = 16
    size: tuple[int, int] = (96, 96)
    blob_count_range: tuple[int, int] = (1, 3)
    area_frac_range: tuple[float, float] = (0.05, 0.2)
    noise_sigma: float = 0.02
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    encoder_variant: str = "resnet34_shape"
    ablation: str = "full"
    norm: str = "batch"
    input_resize: tuple[int, int] = (288, 384)  # (H, W)
    crop: tuple[int, int] = (224, 224)
    batch_size: int = 4
    momentum: float = 0.9
    weight_decay: float = 0.0005
    schedule: PolySchedule = field(default_factory=PolySchedule)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    augment_enabled: bool = True
    split_mode: str = "none"
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    max_iterations: int = 0  # 0 = run the full schedule
    seed: int = 42
    eval_threshold: float = 0.5


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Return ``cfg`` unchanged iff every invariant holds; else raise ConfigError.

    All violations are collected and reported together, each naming the
    offending field.
    """
    errors = config_violations(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def config_violations(cfg: ExperimentConfig) -> list[str]:
    errs: list[str] = []
    if cfg.encoder_variant not in ENCODER_VARIANTS:
        errs.append(f"encoder_variant: unknown variant {cfg.encoder_variant!r}")
    if cfg.ablation not in ABLATIONS:
        errs.append(f"ablation: unknown ablation {cfg.ablation!r}")
    if cfg.norm not in NORMS:
        errs.append(f"norm: unknown norm {cfg.norm!r}")
    ch, cw = cfg.crop
    rh, rw = cfg.input_resize
    if ch > rh or cw > rw:
        errs.append(f"crop: crop {cfg.crop} exceeds input_resize {cfg.input_resize}")
    if ch % 32 != 0 or cw % 32 != 0:
        errs.append(f"crop: crop {cfg.crop} not divisible by 32")
    if ch < 32 or cw < 32:
        errs.append(f"crop: crop {cfg.crop} below minimum 32")
    if cfg.batch_size < 1:
        errs.append(f"batch_size: must be >= 1, got {cfg.batch_size}")
    if not (0.0 < cfg.eval_threshold < 1.0):
        errs.append(f"eval_threshold: threshold out of (0,1): {cfg.eval_threshold}")
    if cfg.momentum < 0:
        errs.append(f"momentum: must be >= 0, got {cfg.momentum}")
    if cfg.weight_decay < 0:
        errs.append(f"weight_decay: must be >= 0, got {cfg.weight_decay}")
    if cfg.schedule.init_lr <= 0:
        errs.append(f"schedule.init_lr: must be > 0, got {cfg.schedule.init_lr}")
    if cfg.schedule.power <= 0:
        errs.append(f"schedule.power: must be > 0, got {cfg.schedule.power}")
    if cfg.schedule.n_epoch <= 0:
        errs.append(f"schedule.n_epoch: must be > 0, got {cfg.schedule.n_epoch}")
    if cfg.loss.bce_weight < 0 or cfg.loss.dice_weight < 0:
        errs.append("loss: bce_weight and dice_weight must be >= 0")
    if cfg.loss.bce_weight == 0 and cfg.loss.dice_weight == 0:
        errs.append("loss: at least one of bce_weight, dice_weight must be positive")
    if cfg.loss.smooth <= 0:
        errs.append(f"loss.smooth: must be > 0, got {cfg.loss.smooth}")
    if len(cfg.loss.scale_weights) != 5:
        errs.append("loss.scale_weights: expected 5 values")
    errs.extend("augment: " + e for e in augment_violations(cfg.augment))
    if cfg.split_mode not in SPLIT_MODES:
        errs.append(f"split_mode: unknown mode {cfg.split_mode!r}")
    if abs(sum(cfg.split_fractions) - 1.0) > 1e-9:
        errs.append(f"split_fractions: must sum to 1, got {cfg.split_fractions}")
    if any(f < 0 for f in cfg.split_fractions):
        errs.append(f"split_fractions: must be non-negative, got {cfg.split_fractions}")
    if cfg.max_iterations < 0:
        errs.append(f"max_iterations: must be >= 0, got {cfg.max_iterations}")
    return errs


def augment_violations(spec: AugmentSpec) -> list[str]:
    errs = []
    for name, p in (("hflip_prob", spec.hflip_prob), ("vflip_prob", spec.vflip_prob)):
        if not 0.0 <= p <= 1.0:
            errs.append(f"{name} out of [0,1]: {p}")
    if spec.rotation_max_deg < 0:
        errs.append(f"rotation_max_deg must be >= 0: {spec.rotation_max_deg}")
    lo, hi = spec.zoom_range
    if not (0.0 < lo <= 1.0 <= hi):
        errs.append(f"zoom_range must satisfy 0 < lo <= 1 <= hi: {spec.zoom_range}")
    if not 0.0 <= spec.shift_max_frac < 0.5:
        errs.append(f"shift_max_frac out of [0, 0.5): {spec.shift_max_frac}")
    return errs


def validate_synth_spec(spec: SynthSpec) -> SynthSpec:
    errs = []
    if spec.count < 1:
        errs.append(f"count must be >= 1, got {spec.count}")
    h, w = spec.size
    if h % 32 != 0 or w % 32 != 0:
        errs.append(f"size {spec.size} not divisible by 32")
    lo, hi = spec.blob_count_range
    if not 1 <= lo <= hi:
        errs.append(f"blob_count_range invalid: {spec.blob_count_range}")
    alo, ahi = spec.area_frac_range
    if not (0.0 < alo < ahi < 1.0):
        errs.append(f"area_frac_range must satisfy 0 < lo < hi < 1: {spec.area_frac_range}")
    if spec.noise_sigma < 0:
        errs.append(f"noise_sigma must be >= 0, got {spec.noise_sigma}")
    if errs:
        raise ConfigError("; ".join("synth: " + e for e in errs))
    return spec


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def _parse_pair(text: str, what: str) -> tuple[int, int]:
    try:
        h, w = text.lower().replace("x", ",").split(",")
        return int(h), int(w)
    except ValueError as e:
        raise ConfigError(f"cannot parse {what} from {text!r} (expected HxW)") from e


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean from {text!r}")


def config_from_sections(sections: dict[str, dict[str, str]]) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed ``{section: {key: value}}`` text."""
    cfg = ExperimentConfig()
    sched = cfg.schedule
    loss = cfg.loss
    aug = cfg.augment

    def get(section: str, key: str) -> str | None:
        return sections.get(section, {}).get(key)

    known: dict[tuple[str, str], object] = {}

    def take(section, key, parse, default):
        raw = get(section, key)
        known[(section, key)] = True
        if raw is None:
            return default
        try:
            return parse(raw)
        except ConfigError:
            raise
        except Exception as e:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from e

    encoder_variant = take("model", "encoder", str, cfg.encoder_variant)
    ablation = take("model", "ablation", str, cfg.ablation)
    norm = take("model", "norm", str, cfg.norm)
    input_resize = take("data", "resize", lambda t: _parse_pair(t, "data.resize"), cfg.input_resize)
    crop = take("data", "crop", lambda t: _parse_pair(t, "data.crop"), cfg.crop)
    split_mode = take("data", "split", str, cfg.split_mode)
    split_fractions = take("data", "fractions", _parse_floats, cfg.split_fractions)
    augment_enabled = take("augment", "enabled", _parse_bool, cfg.augment_enabled)
    aug = AugmentSpec(
        hflip_prob=take("augment", "hflip", float, aug.hflip_prob),
        vflip_prob=take("augment", "vflip", float, aug.vflip_prob),
        rotation_max_deg=take("augment", "rotation", float, aug.rotation_max_deg),
        zoom_range=tuple(take("augment", "zoom", _parse_floats, aug.zoom_range)),
        shift_max_frac=take("augment", "shift", float, aug.shift_max_frac),
    )
    batch_size = take("train", "batch_size", int, cfg.batch_size)
    seed = take("train", "seed", int, cfg.seed)
    max_iterations = take("train", "max_iterations", int, cfg.max_iterations)
    momentum = take("optimizer", "momentum", float, cfg.momentum)
    weight_decay = take("optimizer", "weight_decay", float, cfg.weight_decay)
    sched = PolySchedule(
        init_lr=take("schedule", "init_lr", float, sched.init_lr),
        power=take("schedule", "power", float, sched.power),
        n_epoch=take("schedule", "nEpoch", int, sched.n_epoch),
    )
    loss = LossConfig(
        bce_weight=take("loss", "bce_weight", float, loss.bce_weight),
        dice_weight=take("loss", "dice_weight", float, loss.dice_weight),
        smooth=take("loss", "smooth", float, loss.smooth),
        scale_weights=tuple(take("loss", "scale_weights", _parse_floats, loss.scale_weights)),
    )
    eval_threshold = take("eval", "threshold", float, cfg.eval_threshold)

    for section, keys in sections.items():
        for key in keys:
            if (section, key) not in known:
                raise ConfigError(f"unknown config key {section}.{key}")

    if len(split_fractions) != 3:
        raise ConfigError("data.fractions: expected three values")

    return ExperimentConfig(
        encoder_variant=encoder_variant,
        ablation=ablation,
        norm=norm,
        input_resize=input_resize,
        crop=crop,
        batch_size=batch_size,
        momentum=momentum,
        weight_decay=weight_decay,
        schedule=sched,
        loss=loss,
        augment=aug,
        augment_enabled=augment_enabled,
        split_mode=split_mode,
        split_fractions=split_fractions,
        max_iterations=max_iterations,
        seed=seed,
        eval_threshold=eval_threshold,
    )


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config parse error: {e}") from e
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return config_from_sections(sections)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text)


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply CLI ``section.key=value`` overrides on top of a config."""
    if not overrides:
        return cfg
    sections = sections_from_config(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} is not of the form section.key")
        section, key = dotted.split(".", 1)
        sections.setdefault(section.strip(), {})[key.strip()] = value.strip()
    return config_from_sections(sections)


def sections_from_config(cfg: ExperimentConfig) -> dict[str, dict[str, str]]:
    fmt = lambda v: repr(float(v)) if isinstance(v, float) else str(v)
    return {
        "model": {
            "encoder": cfg.encoder_variant,
            "ablation": cfg.ablation,
            "norm": cfg.norm,
        },
        "data": {
            "resize": f"{cfg.input_resize[0]}x{cfg.input_resize[1]}",
            "crop": f"{cfg.crop[0]}x{cfg.crop[1]}",
            "split": cfg.split_mode,
            "fractions": ",".join(fmt(f) for f in cfg.split_fractions),
        },
        "augment": {
            "enabled": "true" if cfg.augment_enabled else "false",
            "hflip": fmt(cfg.augment.hflip_prob),
            "vflip": fmt(cfg.augment.vflip_prob),
            "rotation": fmt(cfg.augment.rotation_max_deg),
            "zoom": ",".join(fmt(z) for z in cfg.augment.zoom_range),
            "shift": fmt(cfg.augment.shift_max_frac),
        },
        "train": {
            "batch_size": str(cfg.batch_size),
            "seed": str(cfg.seed),
            "max_iterations": str(cfg.max_iterations),
        },
        "optimizer": {
            "momentum": fmt(cfg.momentum),
            "weight_decay": fmt(cfg.weight_decay),
        },
        "schedule": {
            "init_lr": fmt(cfg.schedule.init_lr),
            "power": fmt(cfg.schedule.power),
            "nEpoch": str(cfg.schedule.n_epoch),
        },
        "loss": {
            "bce_weight": fmt(cfg.loss.bce_weight),
            "dice_weight": fmt(cfg.loss.dice_weight),
            "smooth": fmt(cfg.loss.smooth),
            "scale_weights": ",".join(fmt(w) for w in cfg.loss.scale_weights),
        },
        "eval": {"threshold": fmt(cfg.eval_threshold)},
    }


def resolved_text(cfg: ExperimentConfig) -> str:
    """Serialize a config to the file grammar; round-trips through parse."""
    parser = configparser.ConfigParser()
    for section, keys in sections_from_config(cfg).items():
        parser[section] = keys
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_hash(cfg: ExperimentConfig) -> bytes:
    """32-byte digest identifying a resolved configuration."""
    return hashlib.sha256(resolved_text(cfg).encode("utf-8")).digest()


def with_threshold(cfg: ExperimentConfig, threshold: float) -> ExperimentConfig:
    return replace(cfg, eval_threshold=threshold)
