"""The full model: optional color transform in front of the two-stream backbone."""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from csl_reid.backbone import BackboneParams, backbone_init, embed
from csl_reid.config import Modality, Regime
from csl_reid.numerics.checkpoint import load_checkpoint, save_checkpoint
from csl_reid.numerics.tensor import ParamStore, ParamTensor, Tensor, precision
from csl_reid.pct import PctParams, pct_forward, pct_init
from csl_reid.run_config import TrainConfig, section_from_dict

logger = logging.getLogger(__name__)

# Parameter name fragments that belong to the infrared stream only.
IR_STREAM_MARKERS = ("c_in_ir", "bn_ir", "shallow_ir")


class CslNetwork:
    """Owns one :class:`ParamStore` holding ``pct.*``, ``backbone.*`` and ``classifier.*``."""

    def __init__(self, num_classes: int, cfg: TrainConfig, rng: Optional[np.random.Generator] = None):
        self.num_classes = num_classes
        self.regime = Regime(cfg.mode)
        self.use_pct = cfg.variant.uses_pct
        self.dtype = np.dtype(cfg.dtype)
        rng = rng if rng is not None else np.random.default_rng([cfg.seed, 0])
        self.store = ParamStore()
        with precision(self.dtype):
            self.pct: Optional[PctParams] = None
            if self.use_pct:
                self.pct = pct_init(cfg.pct_hidden, rng, self.store, regime=self.regime)
            self.backbone: BackboneParams = backbone_init(
                num_classes,
                rng,
                self.store,
                widths=cfg.widths,
                strides=cfg.strides,
                embed_dim=cfg.embed_dim,
                use_nonlocal=cfg.use_nonlocal,
            )

    def forward(self, images, stream: Modality) -> Tuple[Tensor, Tensor]:
        """Color transform (when enabled) then backbone; returns ``(features, logits)``."""
        stream = Modality(stream)
        if self.regime == Regime.CC and stream == Modality.IR:
            raise ValueError("The IR stream is not available in the CC regime")
        x = np.asarray(images, dtype=self.dtype) if not isinstance(images, Tensor) else images
        if self.pct is not None:
            x = pct_forward(x, stream, self.pct)
        return embed(x, stream, self.backbone)

    def set_mode(self, mode: str) -> None:
        self.store.set_mode(mode)

    def parameters(self) -> List[ParamTensor]:
        return self.store.parameters()

    def ir_parameters(self) -> List[ParamTensor]:
        return [p for p in self.parameters() if any(marker in p.name for marker in IR_STREAM_MARKERS)]

    def astype(self, dtype) -> None:
        self.dtype = np.dtype(dtype)
        self.store.astype(self.dtype)

    def save(self, directory: str, meta: Optional[Dict] = None) -> str:
        meta = dict(meta or {})
        meta.update(num_classes=self.num_classes, regime=self.regime.value, use_pct=self.use_pct)
        return save_checkpoint(directory, self.store.state_arrays(), meta)

    @classmethod
    def load(cls, directory: str) -> Tuple["CslNetwork", dict]:
        """Rebuild a network from a checkpoint written by :meth:`save`.

        The checkpoint meta must carry the ``train`` config section it was
        trained with.
        """
        arrays, meta = load_checkpoint(directory)
        if "train" not in meta or "num_classes" not in meta:
            raise ValueError(f"Checkpoint {directory} lacks the train config or class count in its meta")
        cfg = section_from_dict(TrainConfig, meta["train"], "train")
        network = cls(int(meta["num_classes"]), cfg)
        network.store.load_state_arrays(arrays)
        network.dtype = next(iter(arrays.values())).dtype
        logger.info("Loaded %s (%d parameters)", directory, network.store.count())
        return network, meta
