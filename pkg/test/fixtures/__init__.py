"""Shared builders for the csl-reid test suite."""

import dataclasses

import numpy as np

from csl_reid.color_aug import Image
from csl_reid.config import Modality, Regime
from csl_reid.data.generator import make_dataset
from csl_reid.run_config import DataConfig, EvalConfig, RunConfig, TrainConfig


def tiny_train_config(**overrides):
    """A training config small enough to run a few steps in a test."""
    values = dict(
        epochs=2,
        steps_per_epoch=2,
        warmup_epochs=1,
        decay_epochs=[1],
        P=2,
        K=2,
        widths=[4, 8],
        strides=[2, 2],
        embed_dim=8,
        pct_hidden=3,
        prefetch=2,
        crop_pad=2,
    )
    values.update(overrides)
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def tiny_data_config(regime=Regime.VI, **overrides):
    values = dict(n_train_ids=3, n_test_ids=2, views=2, images_per_cell=2, clothing_sets=2, regime=regime, seed=0)
    values.update(overrides)
    cfg = DataConfig(**values)
    cfg.validate()
    return cfg


def tiny_run_config(regime=Regime.VI, **train_overrides):
    return RunConfig(
        data=tiny_data_config(regime),
        train=tiny_train_config(mode=regime, **train_overrides),
        eval=EvalConfig(batch_size=8),
    )


def make_tiny_dataset(out_dir, regime=Regime.VI, **overrides):
    """Render a tiny dataset into ``out_dir`` and return its manifests."""
    return make_dataset(tiny_data_config(regime, **overrides), out_dir, show_progress=False)


def random_image(rng, modality=Modality.RGB, height=8, width=4, identity=0, view=0, clothing=0):
    pixels = rng.uniform(0.0, 1.0, size=(3, height, width))
    if modality == Modality.IR:
        pixels = np.repeat(pixels[:1], 3, axis=0)
    return Image(pixels, modality, identity, view, clothing)


def pixel_image(rgb, modality=Modality.RGB, identity=0):
    """A 1 x 1 image holding one pixel value."""
    return Image(np.asarray(rgb, dtype=np.float64).reshape(3, 1, 1), modality, identity)


def with_fields(cfg, **changes):
    return dataclasses.replace(cfg, **changes)
