"""Training loop: sampling, color twins, forward, losses and SGD."""

import logging
import os
import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from csl_reid.color_aug import Image, apply_policy, random_crop
from csl_reid.config import Direction, Modality, Regime
from csl_reid.data.manifest import DatasetManifest
from csl_reid.data.sampler import Batch, sample_batch
from csl_reid.evaluation import RetrievalReport, evaluate, print_report_table, write_report_csv
from csl_reid.losses import LossReport, compute_losses
from csl_reid.network import CslNetwork
from csl_reid.numerics import ops
from csl_reid.numerics.optim import SGD
from csl_reid.run_config import RunConfig, TrainConfig
from csl_reid.utils.csv_utils import TRAINING_LOG_COLUMNS, write_csv
from csl_reid.utils.json_utils import write_json

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoint"
TRAINING_LOG = "training_log.csv"
CONFIG_ECHO = "config.json"
REPORT_NAMES = {
    Direction.NIR_TO_RGB: "report_nir2rgb.csv",
    Direction.RGB_TO_NIR: "report_rgb2nir.csv",
    Direction.CC: "report_cc.csv",
}

# Stream seeds derived from the run seed.
INIT_STREAM, SAMPLER_STREAM, AUG_STREAM, CROP_STREAM = 0, 1, 2, 3


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Linear warm-up to ``lr0``, then one ``decay_factor`` per passed decay epoch.

    Raises:
        ValueError: If ``epoch`` is outside ``[0, cfg.epochs)``.
    """
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"Epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.warmup_epochs:
        return cfg.lr0 * (epoch + 1) / cfg.warmup_epochs
    passed = sum(1 for decay_epoch in cfg.decay_epochs if epoch >= decay_epoch)
    return cfg.lr0 * cfg.decay_factor**passed


@dataclass
class StepInputs:
    """Network-ready arrays of one step; RGB rows are originals then twins."""

    rgb: np.ndarray
    rgb_labels: np.ndarray
    ir: Optional[np.ndarray] = None
    ir_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    step: int = 0

    @property
    def labels(self) -> np.ndarray:
        return np.concatenate([self.rgb_labels, self.ir_labels])


def prepare_inputs(
    batch: Batch,
    cfg: TrainConfig,
    aug_rng: np.random.Generator,
    crop_rng: np.random.Generator,
    dtype=np.float32,
    step: int = 0,
) -> StepInputs:
    """Crop every image and add the color twin of each RGB image.

    Variants without a twin (Baseline, +PCT) never touch ``aug_rng``. With
    ``in_place_twin`` the twin replaces its original instead of joining it.
    """
    policy = cfg.aug_policy()
    originals: List[Image] = [random_crop(img, cfg.crop_pad, crop_rng) for img in batch.rgb]
    rgb = originals
    labels = batch.rgb_labels
    if policy is not None:
        twins = [apply_policy(img, policy, aug_rng) for img in originals]
        if cfg.in_place_twin:
            rgb = twins
        else:
            rgb = originals + twins
            labels = np.concatenate([batch.rgb_labels, batch.rgb_labels])
    inputs = StepInputs(
        rgb=np.stack([img.pixels for img in rgb]).astype(dtype, copy=False),
        rgb_labels=np.asarray(labels, dtype=np.int64),
        step=step,
    )
    if batch.ir:
        cropped = [random_crop(img, cfg.crop_pad, crop_rng) for img in batch.ir]
        inputs.ir = np.stack([img.pixels for img in cropped]).astype(dtype, copy=False)
        inputs.ir_labels = np.asarray(batch.ir_labels, dtype=np.int64)
    return inputs


@dataclass
class TrainState:
    network: CslNetwork
    optimizer: SGD
    step: int = 0

    @classmethod
    def create(cls, network: CslNetwork, cfg: TrainConfig) -> "TrainState":
        """SGD over every trainable parameter; IR-stream ones are left out in CC."""
        params = network.parameters()
        if network.regime == Regime.CC:
            ir_names = {p.name for p in network.ir_parameters()}
            params = [p for p in params if p.name not in ir_names]
        optimizer = SGD(params, cfg.momentum, cfg.weight_decay, cfg.exclude_no_decay)
        return cls(network, optimizer)


def train_step(inputs: StepInputs, state: TrainState, cfg: TrainConfig, lr: float) -> LossReport:
    """One forward/backward/update on a prepared batch.

    VI: RGB rows (originals and twins) go through the RGB stream and IR rows
    through the IR stream; features and logits are pooled into one loss.
    CC: RGB rows only.

    Raises:
        ValueError: If a VI step has no IR images.
        RuntimeError: On a non-finite loss, or if an IR-stream parameter
            received a gradient in CC mode.
    """
    network = state.network
    network.set_mode("train")
    network.store.zero_grad()
    try:
        features, logits = network.forward(inputs.rgb, Modality.RGB)
        if network.regime == Regime.VI:
            if inputs.ir is None:
                raise ValueError("A VI step needs IR images")
            ir_features, ir_logits = network.forward(inputs.ir, Modality.IR)
            features = ops.concat([features, ir_features])
            logits = ops.concat([logits, ir_logits])
        l_total, report = compute_losses(features, logits, inputs.labels, neg_weight_sign=cfg.wrt_neg_sign)
        l_total.backward()
    except FloatingPointError as exc:
        logger.error("Non-finite loss at step %d: %s", inputs.step, exc)
        raise RuntimeError(f"Training diverged at step {inputs.step}: {exc}") from exc

    if network.regime == Regime.CC:
        touched = [p.name for p in network.ir_parameters() if np.any(p.grad != 0)]
        if touched:
            raise RuntimeError(f"IR-stream parameters received gradients in CC mode: {touched}")

    state.optimizer.step(lr)
    state.step += 1
    return report


class BatchPrefetcher:
    """Producer thread delivering prepared batches through a bounded queue.

    A single producer owns the sampler, augmentation and crop generators;
    batches arrive in generation order.
    """

    def __init__(self, produce: Callable[[int], StepInputs], total: int, depth: int = 4):
        self.produce = produce
        self.total = total
        self._queue: "queue.Queue" = queue.Queue(maxsize=max(1, depth))
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="batch-prefetch", daemon=True)

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _run(self) -> None:
        for step in range(self.total):
            if self._stop.is_set():
                return
            try:
                item = self.produce(step)
            except Exception as exc:  # handed to the consumer
                self._put(exc)
                return
            if not self._put(item):
                return

    def __iter__(self):
        self._thread.start()
        try:
            for _ in range(self.total):
                item = self._queue.get()
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()


class TrainingRun:
    """Train one configuration, then checkpoint and evaluate it.

    Writes into ``out_dir``: ``config.json``, ``training_log.csv``,
    ``checkpoint/`` and one ``report_*.csv`` per evaluated direction.
    """

    def __init__(
        self, run_cfg: RunConfig, manifests: Dict[str, DatasetManifest], out_dir: str, show_progress: bool = True
    ):
        self.run_cfg = run_cfg
        self.cfg = run_cfg.train
        self.train_manifest = manifests["train"]
        self.test_manifest = manifests.get("test")
        self.out_dir = out_dir
        self.show_progress = show_progress
        self.label_map = self.train_manifest.label_map()
        self.history: List[Dict[str, float]] = []
        self.reports: List[RetrievalReport] = []
        self.network: Optional[CslNetwork] = None
        self._is_interrupted = threading.Event()
        if self.train_manifest.regime != Regime(self.cfg.mode):
            raise ValueError(
                f"train.mode={Regime(self.cfg.mode).value} does not match the "
                f"{self.train_manifest.regime.value} dataset"
            )

    def _rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, stream])

    def log_header(self, state: TrainState) -> None:
        no_decay = state.optimizer.no_decay_names()
        logger.info(
            "Training mode=%s variant=%s seed=%d params=%d steps=%d",
            Regime(self.cfg.mode).value,
            self.cfg.variant.label,
            self.cfg.seed,
            state.network.store.count(),
            self.cfg.total_steps,
        )
        logger.info("Excluded from weight decay (%d): %s", len(no_decay), ", ".join(no_decay) or "none")

    def train(self) -> CslNetwork:
        cfg = self.cfg
        network = CslNetwork(len(self.label_map), cfg, rng=self._rng(INIT_STREAM))
        state = TrainState.create(network, cfg)
        self.network = network
        self.log_header(state)

        sampler_rng, aug_rng, crop_rng = self._rng(SAMPLER_STREAM), self._rng(AUG_STREAM), self._rng(CROP_STREAM)

        def produce(step: int) -> StepInputs:
            batch = sample_batch(self.train_manifest, cfg.P, cfg.K, cfg.mode, sampler_rng, self.label_map)
            return prepare_inputs(batch, cfg, aug_rng, crop_rng, network.dtype, step=step)

        prefetcher = BatchPrefetcher(produce, cfg.total_steps, cfg.prefetch)
        epoch_losses: List[LossReport] = []
        with logging_redirect_tqdm():
            progress = tqdm(total=cfg.total_steps, desc="train", unit="step", disable=not self.show_progress)
            for inputs in prefetcher:
                if self._is_interrupted.is_set():
                    prefetcher.stop()
                    logger.warning("Training interrupted at step %d", inputs.step)
                    break
                epoch = inputs.step // cfg.steps_per_epoch
                lr = lr_schedule(epoch, cfg)
                report = train_step(inputs, state, cfg, lr)
                self.history.append(
                    {
                        "step": inputs.step,
                        "l_id": report.l_id,
                        "l_sq": report.l_sq,
                        "l_total": report.l_total,
                        "mean_delta": report.mean_delta,
                    }
                )
                epoch_losses.append(report)
                progress.update(1)
                if (inputs.step + 1) % cfg.steps_per_epoch == 0:
                    logger.info(
                        "Epoch %d/%d lr=%.4g l_id=%.4f l_sq=%.4f l_total=%.4f",
                        epoch + 1,
                        cfg.epochs,
                        lr,
                        float(np.mean([r.l_id for r in epoch_losses])),
                        float(np.mean([r.l_sq for r in epoch_losses])),
                        float(np.mean([r.l_total for r in epoch_losses])),
                    )
                    epoch_losses = []
            progress.close()
        return network

    def evaluate(self) -> List[RetrievalReport]:
        if self.network is None:
            raise RuntimeError("Nothing to evaluate before training")
        if self.test_manifest is None:
            logger.warning("No test manifest; skipping evaluation")
            return []
        eval_cfg = self.run_cfg.eval
        self.reports = []
        for direction in eval_cfg.resolved_directions(Regime(self.cfg.mode)):
            report = evaluate(
                self.network,
                self.test_manifest,
                direction,
                gallery_views=eval_cfg.gallery_views,
                batch_size=eval_cfg.batch_size,
                topk=eval_cfg.cmc_topk,
            )
            write_report_csv(os.path.join(self.out_dir, REPORT_NAMES[direction]), [report])
            self.reports.append(report)
        return self.reports

    def execute(self) -> List[RetrievalReport]:
        os.makedirs(self.out_dir, exist_ok=True)
        write_json(os.path.join(self.out_dir, CONFIG_ECHO), self.run_cfg.to_dict())
        network = self.train()
        write_csv(os.path.join(self.out_dir, TRAINING_LOG), self.history, TRAINING_LOG_COLUMNS)
        if self._is_interrupted.is_set():
            return []
        label_map = {str(k): v for k, v in self.label_map.items()}
        network.save(
            os.path.join(self.out_dir, CHECKPOINT_DIR),
            meta={"train": self.run_cfg.to_dict()["train"], "label_map": label_map},
        )
        reports = self.evaluate()
        if reports:
            print_report_table(reports)
        return reports

    def interrupt(self) -> None:
        """Stop after the current step; nothing past the training log is written."""
        self._is_interrupted.set()
