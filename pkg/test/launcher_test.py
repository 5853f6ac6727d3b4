import filecmp
import logging
import os
import shutil
import tempfile
import unittest
from unittest import mock

from csl_reid.config import APP_NAME, OUTPUT_ROOT_ENV
from csl_reid.data.manifest import load_dataset
from csl_reid.launcher import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, parse_args
from csl_reid.utils.csv_utils import LONG_COLUMNS, read_strict_csv
from csl_reid.utils.json_utils import load_json_data, write_json

GEN_FLAGS = ["--n-train-ids", "3", "--n-test-ids", "2", "--views", "2", "--images-per-cell", "1", "-q"]

TINY_RUN = {
    "train": {
        "epochs": 1,
        "steps_per_epoch": 2,
        "warmup_epochs": 0,
        "decay_epochs": [],
        "P": 2,
        "K": 2,
        "widths": [4, 8],
        "strides": [2, 2],
        "embed_dim": 8,
        "pct_hidden": 3,
        "prefetch": 2,
        "crop_pad": 2,
    },
    "eval": {"batch_size": 8},
}


def reset_package_logger():
    logger = logging.getLogger(APP_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


class LauncherTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        reset_package_logger()
        shutil.rmtree(self.tmp)

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)


class ParserTest(LauncherTestCase):
    def test_overrides_merge(self):
        args = parse_args(["gen", "--set", "data.seed=3", "--set", "data.views=5, data.seed=4"])
        self.assertEqual(args.overrides, {"data.seed": 4, "data.views": 5})

    def test_missing_required_flag_is_usage_error(self):
        with self.assertRaises(SystemExit) as cm:
            parse_args(["train"])
        self.assertEqual(cm.exception.code, EXIT_USAGE)

    def test_unknown_command(self):
        with self.assertRaises(SystemExit) as cm:
            parse_args(["serve"])
        self.assertEqual(cm.exception.code, EXIT_USAGE)


class GenTest(LauncherTestCase):
    def test_writes_dataset_and_echo(self):
        out = self.path("vi")
        self.assertEqual(main(["gen", "--out", out, "--seed", "2"] + GEN_FLAGS), EXIT_OK)
        manifests = load_dataset(out)
        self.assertEqual(len(manifests["train"]), 3 * 2 * 1 * 2)
        self.assertEqual(load_json_data(self.path("vi", "config.json"))["data"]["seed"], 2)

    def test_refuses_non_empty_directory(self):
        out = self.path("vi")
        self.assertEqual(main(["gen", "--out", out] + GEN_FLAGS), EXIT_OK)
        self.assertEqual(main(["gen", "--out", out] + GEN_FLAGS), EXIT_FAILURE)
        self.assertEqual(main(["gen", "--out", out, "--force"] + GEN_FLAGS), EXIT_OK)

    def test_config_errors(self):
        self.assertEqual(main(["gen", "--out", self.path("a"), "--n-train-ids", "1", "-q"]), EXIT_USAGE)
        self.assertEqual(main(["gen", "--out", self.path("b"), "--set", "data.bogus=1", "-q"]), EXIT_USAGE)
        self.assertEqual(main(["gen", "--config", self.path("missing.json"), "-q"]), EXIT_FAILURE)

    def test_default_output_root(self):
        with mock.patch.dict(os.environ, {OUTPUT_ROOT_ENV: self.path("root")}):
            args = ["gen", "--regime", "cc", "--seed", "1", "--clothing-sets", "2"] + GEN_FLAGS
            self.assertEqual(main(args), EXIT_OK)
        self.assertTrue(os.path.isfile(self.path("root", "data", "cc1", "train.csv")))


class PipelineTest(LauncherTestCase):
    """gen, train, eval, pct-apply and export on one tiny dataset."""

    def setUp(self):
        super().setUp()
        self.data = self.path("data")
        self.config = write_json(self.path("tiny.json"), TINY_RUN)
        self.assertEqual(main(["gen", "--out", self.data] + GEN_FLAGS), EXIT_OK)

    def train(self, name):
        out = self.path(name)
        code = main(["train", "--data", self.data, "--config", self.config, "--out", out, "-q"])
        self.assertEqual(code, EXIT_OK)
        return out

    def test_train_then_eval_export_and_pct(self):
        run = self.train("run")
        for name in ("config.json", "training_log.csv", "report_nir2rgb.csv", "report_rgb2nir.csv", "run.log"):
            self.assertTrue(os.path.isfile(os.path.join(run, name)), name)

        eval_out = self.path("eval")
        args = ["eval", "--checkpoint", run, "--data", self.data, "--config", self.config, "--direction", "both"]
        args += ["--out", eval_out, "-q"]
        self.assertEqual(main(args), EXIT_OK)
        self.assertTrue(os.path.isfile(os.path.join(eval_out, "report_nir2rgb.csv")))
        self.assertTrue(os.path.isfile(os.path.join(eval_out, "report_rgb2nir.csv")))
        for name in ("report_nir2rgb.csv", "report_rgb2nir.csv"):
            self.assertTrue(filecmp.cmp(os.path.join(run, name), os.path.join(eval_out, name), shallow=False), name)

        long_path = self.path("long.csv")
        inputs = [os.path.join(eval_out, "report_nir2rgb.csv"), os.path.join(run, "training_log.csv")]
        self.assertEqual(main(["export"] + inputs + ["--out", long_path]), EXIT_OK)
        frame = read_strict_csv(long_path, LONG_COLUMNS)
        expected = {"cmc", "mAP", "n_queries", "n_gallery", "n_dropped", "l_id", "l_sq", "l_total", "mean_delta"}
        self.assertEqual(set(frame["metric"]), expected)

        pct_out = self.path("pct")
        args = ["pct-apply", "--checkpoint", run, "--data", self.data, "--limit", "3", "--out", pct_out, "-q"]
        self.assertEqual(main(args), EXIT_OK)
        self.assertEqual(len([f for f in os.listdir(pct_out) if f.endswith("_pct.png")]), 3)

    def test_same_seed_same_reports(self):
        first, second = self.train("first"), self.train("second")
        for name in ("training_log.csv", "report_nir2rgb.csv", "report_rgb2nir.csv"):
            self.assertTrue(filecmp.cmp(os.path.join(first, name), os.path.join(second, name), shallow=False), name)

    def test_runtime_failures(self):
        self.assertEqual(main(["eval", "--checkpoint", self.path("nothing"), "--data", self.data, "-q"]), EXIT_FAILURE)
        self.assertEqual(main(["train", "--data", self.path("nothing"), "--out", self.path("x"), "-q"]), EXIT_FAILURE)
        self.assertEqual(main(["export", self.path("data", "train.csv")]), EXIT_FAILURE)

    def test_ablate(self):
        out = self.path("ablation")
        args = ["ablate", "--data", self.data, "--config", self.config, "--rows", "baseline,ica+pct"]
        args += ["--out", out, "-q"]
        self.assertEqual(main(args), EXIT_OK)
        self.assertTrue(os.path.isfile(os.path.join(out, "ablation.csv")))
        self.assertEqual(main(args[:-3] + ["--signs", "0", "--out", self.path("bad"), "-q"]), EXIT_USAGE)
