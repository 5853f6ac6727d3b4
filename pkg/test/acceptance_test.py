"""Seeded end-to-end runs at the default desk scale.

Deselected by default; run with ``pytest -m slow`` or ``tox -e slow``.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from csl_reid.ablation import build_matrix, run_ablation
from csl_reid.config import Regime
from csl_reid.data.generator import make_dataset
from csl_reid.run_config import DataConfig, RunConfig, TrainConfig, Variant
from csl_reid.trainer import TrainingRun
from csl_reid.utils.csv_utils import TRAINING_LOG_COLUMNS, read_strict_csv


def _rank1(table, variant, direction):
    rows = table[(table["variant"] == variant) & (table["direction"] == direction)]
    return 100.0 * float(rows["rank1"].iloc[0])


@pytest.mark.slow
class DefaultDatasetTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.manifests = make_dataset(DataConfig(seed=0), os.path.join(cls.tmp, "vi0"), show_progress=False)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)

    def test_counts_and_signal(self):
        self.assertEqual(len(self.manifests["train"]), 1024)
        self.assertEqual(len(self.manifests["test"]), 512)
        header = self.manifests["test"].header
        self.assertGreater(float(header["stat.gray_nn_rank1"]), float(header["stat.chance"]))

    def test_loss_decreases(self):
        run_cfg = RunConfig(train=TrainConfig(epochs=5, steps_per_epoch=10, warmup_epochs=1, decay_epochs=[]))
        out = os.path.join(self.tmp, "loss")
        TrainingRun(run_cfg, self.manifests, out, show_progress=False).execute()
        log = read_strict_csv(os.path.join(out, "training_log.csv"), TRAINING_LOG_COLUMNS)
        self.assertEqual(len(log), 50)
        self.assertLess(log["l_total"].iloc[-10:].mean(), log["l_total"].iloc[:10].mean())

    def test_ablation_ordering(self):
        run_cfg = RunConfig()
        matrix = build_matrix(run_cfg.train, [Variant.BASELINE, Variant.ICA, Variant.PCT, Variant.ICA_PCT])
        table = run_ablation(matrix, run_cfg, self.manifests, os.path.join(self.tmp, "ablation"))
        self.assertTrue(np.all(table["status"] == "ok"))
        full = _rank1(table, "+ICA+PCT", "NIR->RGB")
        self.assertGreaterEqual(full, _rank1(table, "Baseline", "NIR->RGB") + 10.0)
        self.assertGreaterEqual(full, _rank1(table, "+ICA", "NIR->RGB"))
        # The +PCT row is reported but not gated.
        self.assertEqual(len(table[table["variant"] == "+PCT"]), 2)


@pytest.mark.slow
class ClothChangeTest(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_ablation_ordering(self):
        data = DataConfig(regime=Regime.CC, seed=0)
        manifests = make_dataset(data, os.path.join(self.tmp, "cc0"), show_progress=False)
        run_cfg = RunConfig(data=data, train=TrainConfig(mode=Regime.CC))
        matrix = build_matrix(run_cfg.train, [Variant.BASELINE, Variant.ICA_PCT])
        table = run_ablation(matrix, run_cfg, manifests, os.path.join(self.tmp, "ablation"))
        self.assertGreaterEqual(_rank1(table, "+ICA+PCT", "CC"), _rank1(table, "Baseline", "CC") + 5.0)
