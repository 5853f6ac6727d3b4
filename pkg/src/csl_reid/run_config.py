"""Run configuration: data, training and evaluation sections.

A :class:`RunConfig` is built from defaults, then a JSON file, then dotted
``--set`` overrides, then dedicated command line flags. ``to_dict`` gives the
resolved echo written next to every output.
"""

import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from csl_reid import config
from csl_reid.color_aug import AugPolicy, AugVariant
from csl_reid.config import Direction, Regime
from csl_reid.utils.json_utils import load_json_data, search_params, update_values
from csl_reid.utils.string_utils import parse_int_list

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


class Variant(str, Enum):
    BASELINE = "baseline"
    CR = "cr"
    CS = "cs"
    GRAY = "gray"
    ICA = "ica"
    PCT = "pct"
    ICA_PCT = "ica+pct"

    @classmethod
    def parse(cls, value) -> "Variant":
        """Accept ``ica+pct``, ``+ICA+PCT``, ``Baseline``, ``+Gray-Scale`` and friends."""
        if isinstance(value, Variant):
            return value
        text = str(value).strip().lower().lstrip("+").replace("-scale", "").replace(" ", "")
        for variant in cls:
            if variant.value == text:
                return variant
        raise ConfigError(f"Unknown variant {value!r}, expected one of {[v.value for v in cls]}")

    @property
    def uses_pct(self) -> bool:
        return self in (Variant.PCT, Variant.ICA_PCT)

    @property
    def aug_variant(self) -> Optional[AugVariant]:
        return {
            Variant.CR: AugVariant.CR,
            Variant.CS: AugVariant.CS,
            Variant.GRAY: AugVariant.GRAY,
            Variant.ICA: AugVariant.ICA,
            Variant.ICA_PCT: AugVariant.ICA,
        }.get(self)

    @property
    def label(self) -> str:
        return {
            Variant.BASELINE: "Baseline",
            Variant.CR: "+CR",
            Variant.CS: "+CS",
            Variant.GRAY: "+Gray",
            Variant.ICA: "+ICA",
            Variant.PCT: "+PCT",
            Variant.ICA_PCT: "+ICA+PCT",
        }[self]


def parse_directions(value, regime: Regime) -> List[Direction]:
    """Expand ``both`` / ``nir2rgb`` / ``NIR->RGB`` / ``cc`` into directions.

    Raises:
        ConfigError: For an unknown name or a direction the regime lacks.
    """
    aliases = {
        "both": [Direction.NIR_TO_RGB, Direction.RGB_TO_NIR],
        "nir2rgb": [Direction.NIR_TO_RGB],
        "nir->rgb": [Direction.NIR_TO_RGB],
        "rgb2nir": [Direction.RGB_TO_NIR],
        "rgb->nir": [Direction.RGB_TO_NIR],
        "cc": [Direction.CC],
    }
    names = value if isinstance(value, (list, tuple)) else str(value).split(",")
    directions: List[Direction] = []
    for name in names:
        key = str(name.value if isinstance(name, Direction) else name).strip().lower()
        if key not in aliases:
            raise ConfigError(f"Unknown direction {name!r}, expected one of {sorted(aliases)}")
        for direction in aliases[key]:
            if direction not in directions:
                directions.append(direction)
    for direction in directions:
        if (regime == Regime.CC) != (direction == Direction.CC):
            raise ConfigError(f"Direction {direction.value} is not available in the {regime.value} regime")
    return directions


@dataclass
class DataConfig:
    n_train_ids: int = config.N_TRAIN_IDS
    n_test_ids: int = config.N_TEST_IDS
    views: int = config.N_VIEWS
    clothing_sets: int = config.CC_CLOTHING_SETS
    images_per_cell: int = config.IMAGES_PER_CELL
    regime: Regime = Regime.VI
    seed: int = 0
    height: int = config.IMAGE_HEIGHT
    width: int = config.IMAGE_WIDTH
    ir_noise_sigma: float = config.IR_NOISE_SIGMA

    def validate(self) -> None:
        for name in ("n_train_ids", "n_test_ids"):
            if getattr(self, name) < 2:
                raise ConfigError(f"data.{name} must be >= 2, got {getattr(self, name)}")
        if self.views < 2:
            raise ConfigError(f"data.views must be >= 2 so that view exclusion leaves a gallery, got {self.views}")
        if self.images_per_cell < 1:
            raise ConfigError(f"data.images_per_cell must be >= 1, got {self.images_per_cell}")
        if self.regime == Regime.CC and self.clothing_sets < 2:
            raise ConfigError(f"data.clothing_sets must be >= 2 in the CC regime, got {self.clothing_sets}")
        if self.height < 32 or self.width < 16:
            raise ConfigError(f"Canvas {self.height}x{self.width} is too small for the body layout")
        if self.ir_noise_sigma < 0:
            raise ConfigError(f"data.ir_noise_sigma must be >= 0, got {self.ir_noise_sigma}")


@dataclass
class TrainConfig:
    mode: Regime = Regime.VI
    variant: Variant = Variant.ICA_PCT
    epochs: int = config.EPOCHS
    steps_per_epoch: int = config.STEPS_PER_EPOCH
    lr0: float = config.LR0
    momentum: float = config.MOMENTUM
    weight_decay: float = config.WEIGHT_DECAY
    exclude_no_decay: bool = True
    warmup_epochs: int = config.WARMUP_EPOCHS
    decay_epochs: List[int] = field(default_factory=lambda: list(config.DECAY_EPOCHS))
    decay_factor: float = config.DECAY_FACTOR
    P: int = config.SAMPLER_P
    K: int = config.SAMPLER_K
    seed: int = 0
    use_nonlocal: bool = False
    wrt_neg_sign: int = 1
    p_apply: float = config.P_APPLY
    p_cr_given_apply: float = config.P_CR_GIVEN_APPLY
    in_place_twin: bool = False
    crop_pad: int = config.CROP_PAD
    pct_hidden: int = config.PCT_HIDDEN
    widths: List[int] = field(default_factory=lambda: list(config.BACKBONE_WIDTHS))
    strides: List[int] = field(default_factory=lambda: list(config.BACKBONE_STRIDES))
    embed_dim: int = config.EMBED_DIM
    prefetch: int = config.PREFETCH_DEPTH
    dtype: str = "float32"

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def aug_policy(self) -> Optional[AugPolicy]:
        """Policy of the color twin, ``None`` for variants without one."""
        aug = self.variant.aug_variant
        if aug is None:
            return None
        return AugPolicy(self.p_apply, self.p_cr_given_apply, rng_seed=self.seed, variant=aug)

    def validate(self) -> None:
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("train.epochs and train.steps_per_epoch must be >= 1")
        if list(self.decay_epochs) != sorted(set(self.decay_epochs)):
            raise ConfigError(f"train.decay_epochs must be strictly increasing, got {self.decay_epochs}")
        if any(epoch < 0 or epoch >= self.epochs for epoch in self.decay_epochs):
            raise ConfigError(f"train.decay_epochs must lie in [0, {self.epochs}), got {self.decay_epochs}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"train.warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.lr0 < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError(
                f"Need lr0 >= 0, weight_decay >= 0 and momentum in [0, 1), got "
                f"{self.lr0}, {self.weight_decay}, {self.momentum}"
            )
        if self.wrt_neg_sign not in (1, -1):
            raise ConfigError(f"train.wrt_neg_sign must be 1 or -1, got {self.wrt_neg_sign}")
        if self.P < 2:
            raise ConfigError(f"train.P must be >= 2 so that every anchor has a negative, got {self.P}")
        if self.K < 1 or (self.mode == Regime.CC and self.K < 2):
            raise ConfigError(f"train.K must be >= 1 (>= 2 in the CC regime), got {self.K}")
        if len(self.widths) != len(self.strides) or len(self.widths) < 2:
            raise ConfigError(f"train.widths {self.widths} and train.strides {self.strides} must match")
        if self.use_nonlocal and self.widths[config.NONLOCAL_AFTER_BLOCK - 1] % 2:
            raise ConfigError("The non-local block needs an even channel count")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"train.dtype must be float32 or float64, got {self.dtype}")
        for name in ("p_apply", "p_cr_given_apply"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"train.{name} must lie in [0, 1], got {getattr(self, name)}")


@dataclass
class EvalConfig:
    directions: List[str] = field(default_factory=lambda: ["both"])
    gallery_views: Optional[List[int]] = None
    batch_size: int = config.EVAL_BATCH
    cmc_topk: int = config.CMC_TOPK

    def validate(self) -> None:
        if self.batch_size < 1 or self.cmc_topk < 1:
            raise ConfigError("eval.batch_size and eval.cmc_topk must be >= 1")

    def resolved_directions(self, regime: Regime) -> List[Direction]:
        names = ["cc"] if regime == Regime.CC and self.directions == ["both"] else self.directions
        return parse_directions(names, regime)


SECTIONS = {"data": DataConfig, "train": TrainConfig, "eval": EvalConfig}


def _coerce(value: Any, hint: Any, key: str) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if value is None or value == "":
            return None
        return _coerce(value, next(a for a in args if a is not type(None)), key)
    try:
        if origin in (list, List):
            if args and args[0] is str:
                items = value if isinstance(value, (list, tuple)) else str(value).split(",")
                return [str(item).strip() for item in items if str(item).strip()]
            return parse_int_list(value)
        if hint is Variant:
            return Variant.parse(value)
        if isinstance(hint, type) and issubclass(hint, Enum):
            return hint(str(value.value if isinstance(value, Enum) else value).upper())
        if hint is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if hint is int:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError(value)
            return int(float(value))
        if hint is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if hint is str:
            return str(value)
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError(f"Invalid value {value!r} for {key} (expected {getattr(hint, '__name__', hint)})")
    return value


def section_from_dict(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Section {section!r} must be an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"Unknown config key {section}.{unknown[0]}")
    kwargs = {name: _coerce(value, hints[name], f"{section}.{name}") for name, value in data.items()}
    return cls(**kwargs)


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Build a validated config; unknown keys are rejected by dotted name.

        Raises:
            ConfigError: For unknown keys, bad types or invalid ranges.
        """
        if not isinstance(data, dict):
            raise ConfigError("A run config must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"Unknown config key {unknown[0]}")
        run = cls(**{name: section_from_dict(SECTIONS[name], data.get(name, {}), name) for name in SECTIONS})
        run.validate()
        return run

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """Defaults, then the JSON file at ``path``, then dotted ``overrides``."""
        data = cls().to_dict()
        if path:
            try:
                file_data = load_json_data(path)
            except ValueError as exc:
                raise ConfigError(str(exc))
            data = _merge_file(data, file_data)
        return cls.from_dict(data).with_overrides(overrides or {})

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        data = self.to_dict()
        try:
            update_values(data, overrides)
        except KeyError as exc:
            raise ConfigError(f"Unknown config key {exc.args[0]}")
        if overrides:
            logger.debug("Applied overrides: %s", overrides)
        return RunConfig.from_dict(data)

    def validate(self) -> None:
        self.data.validate()
        self.train.validate()
        self.eval.validate()

    def to_dict(self) -> dict:
        return {
            name: {f.name: _plain(getattr(getattr(self, name), f.name)) for f in dataclasses.fields(SECTIONS[name])}
            for name in SECTIONS
        }

    def flat(self) -> Dict[str, Any]:
        return search_params(self.to_dict())


def _merge_file(defaults: dict, file_data: dict) -> dict:
    if not isinstance(file_data, dict):
        raise ConfigError("A run config must be a JSON object")
    merged = {name: dict(section) for name, section in defaults.items()}
    for name, section in file_data.items():
        if name not in merged:
            raise ConfigError(f"Unknown config key {name}")
        if not isinstance(section, dict):
            raise ConfigError(f"Section {name!r} must be an object")
        for key, value in section.items():
            if key not in merged[name]:
                raise ConfigError(f"Unknown config key {name}.{key}")
            merged[name][key] = value
    return merged
