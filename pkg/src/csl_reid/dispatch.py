# coding=utf-8
"""Subcommand handlers behind the ``csl-reid`` launcher.

Every handler takes the parsed arguments and returns an exit code; errors
propagate to :func:`csl_reid.launcher.main`, which maps them to exit codes.
"""

import logging
import os
from typing import Dict, List

import numpy as np
import pandas as pd

from csl_reid.ablation import build_matrix, run_ablation
from csl_reid.config import Modality, Regime, output_root
from csl_reid.data.generator import make_dataset
from csl_reid.data.image_io import save_png
from csl_reid.data.manifest import load_dataset
from csl_reid.evaluation import evaluate, print_report_table, write_report_csv
from csl_reid.logging_config import setup_logging
from csl_reid.network import CslNetwork
from csl_reid.numerics.checkpoint import MANIFEST_NAME
from csl_reid.pct import effective_channel_gain, pct_forward, rescale_for_display
from csl_reid.run_config import ConfigError, RunConfig
from csl_reid.trainer import CHECKPOINT_DIR, CONFIG_ECHO, REPORT_NAMES, TrainingRun
from csl_reid.utils.common_utils import create_sequential_folder, ensure_output_dir, require_file
from csl_reid.utils.csv_utils import LONG_COLUMNS, to_long_format, write_csv
from csl_reid.utils.json_utils import write_json
from csl_reid.utils.string_utils import parse_int_list

logger = logging.getLogger(__name__)

RUN_LOG = "run.log"

# Training runs currently executing in this process, interrupted on Ctrl-C.
ACTIVE_RUNS: List[TrainingRun] = []


def interrupt_active_runs():
    for run in list(ACTIVE_RUNS):
        run.interrupt()


def _flag_overrides(args, mapping: Dict[str, str]) -> Dict[str, object]:
    """Dotted overrides for every dedicated flag the user actually passed."""
    return {key: getattr(args, attr) for attr, key in mapping.items() if getattr(args, attr, None) is not None}


def load_run_config(args, flags: Dict[str, str]) -> RunConfig:
    """Defaults, ``--config``, ``--set`` and then the dedicated flags."""
    if args.config:
        require_file(args.config, "Config file")
    cfg = RunConfig.load(args.config, getattr(args, "overrides", None))
    return cfg.with_overrides(_flag_overrides(args, flags))


def resolve_out_dir(out, force=False):
    """``out`` when given (must be empty unless forced), else a new numbered run folder."""
    if out:
        return ensure_output_dir(out, force)
    root = output_root()
    os.makedirs(root, exist_ok=True)
    return create_sequential_folder(root)


def log_outputs(title, paths):
    margin = " " * 22
    msg = f"{title}\n" + "\n".join(f"{margin} {path}" for path in paths)
    logger.info(msg)


def cmd_gen(args):
    """Render a synthetic dataset and print its per-identity counts."""
    cfg = load_run_config(
        args,
        {
            "regime": "data.regime",
            "seed": "data.seed",
            "n_train_ids": "data.n_train_ids",
            "n_test_ids": "data.n_test_ids",
            "views": "data.views",
            "clothing_sets": "data.clothing_sets",
            "images_per_cell": "data.images_per_cell",
        },
    )
    out = args.out or os.path.join(output_root(), "data", f"{cfg.data.regime.value.lower()}{cfg.data.seed}")
    ensure_output_dir(out, args.force)
    manifests = make_dataset(cfg.data, out, show_progress=not args.quiet)
    echo = write_json(os.path.join(out, CONFIG_ECHO), cfg.to_dict())
    for split, manifest in manifests.items():
        print(f"[{split}] {len(manifest)} images, {len(manifest.identities())} identities")
        print(manifest.summary().to_string(index=False))
    log_outputs("DATASET WRITTEN", [os.path.join(out, f"{s}.csv") for s in manifests] + [echo])
    return 0


def _train_config(args, manifests) -> RunConfig:
    cfg = load_run_config(
        args,
        {"mode": "train.mode", "variant": "train.variant", "seed": "train.seed", "epochs": "train.epochs"},
    )
    regime = manifests["train"].regime
    if args.mode is None and cfg.train.mode != regime:
        logger.info("train.mode follows the dataset regime %s", regime.value)
        cfg = cfg.with_overrides({"train.mode": regime.value})
    return cfg


def cmd_train(args):
    """Train one configuration, then checkpoint and evaluate it."""
    manifests = load_dataset(args.data)
    cfg = _train_config(args, manifests)
    out = resolve_out_dir(args.out, args.force)
    setup_logging(debug=args.debug, logfile=os.path.join(out, RUN_LOG))
    run = TrainingRun(cfg, manifests, out, show_progress=not args.quiet)
    ACTIVE_RUNS.append(run)
    try:
        reports = run.execute()
    finally:
        ACTIVE_RUNS.remove(run)
    if not reports:
        logger.error("Run in %s finished without evaluation reports", out)
        return 2
    log_outputs("RUN COMPLETE", [os.path.join(out, name) for name in sorted(os.listdir(out))])
    return 0


def _checkpoint_dir(path):
    """Accept a run directory or the checkpoint directory itself."""
    if os.path.isfile(os.path.join(path, MANIFEST_NAME)):
        return path
    return os.path.dirname(require_file(os.path.join(path, CHECKPOINT_DIR, MANIFEST_NAME), "Checkpoint"))


def cmd_eval(args):
    """Score a checkpoint on the test split for the requested directions."""
    network, _ = CslNetwork.load(_checkpoint_dir(args.checkpoint))
    test = load_dataset(args.data)["test"]
    cfg = load_run_config(args, {"direction": "eval.directions", "gallery_views": "eval.gallery_views"})
    out = args.out or os.path.join(os.path.dirname(_checkpoint_dir(args.checkpoint)), "eval")
    ensure_output_dir(out, args.force)
    write_json(os.path.join(out, CONFIG_ECHO), dict(cfg.to_dict(), checkpoint=os.path.abspath(args.checkpoint)))

    reports, paths = [], []
    for direction in cfg.eval.resolved_directions(network.regime):
        report = evaluate(
            network,
            test,
            direction,
            gallery_views=cfg.eval.gallery_views,
            batch_size=cfg.eval.batch_size,
            topk=cfg.eval.cmc_topk,
        )
        paths.append(write_report_csv(os.path.join(out, REPORT_NAMES[direction]), [report]))
        reports.append(report)
    print_report_table(reports)
    log_outputs("EVALUATION WRITTEN", paths)
    return 0


def cmd_ablate(args):
    """Train and evaluate every requested variant on one dataset."""
    manifests = load_dataset(args.data)
    cfg = _train_config(args, manifests)
    variants = [v.strip() for v in args.rows.split(",") if v.strip()]
    signs = parse_int_list(args.signs)
    if any(sign not in (1, -1) for sign in signs):
        raise ConfigError(f"--signs takes 1 and/or -1, got {signs}")
    matrix = build_matrix(cfg.train, variants, signs)
    out = resolve_out_dir(args.out, args.force)
    setup_logging(debug=args.debug, logfile=os.path.join(out, RUN_LOG))
    table = run_ablation(matrix, cfg, manifests, out, show_progress=not args.quiet)
    print(table.drop(columns=["error"]).to_string(index=False))
    failed = int((table["status"] != "ok").sum())
    if failed:
        logger.error("%d ablation row(s) failed; see %s", failed, os.path.join(out, RUN_LOG))
        return 2
    return 0


def cmd_pct_apply(args):
    """Write the learned color transform of test images as PNGs."""
    network, _ = CslNetwork.load(_checkpoint_dir(args.checkpoint))
    if network.pct is None:
        raise ConfigError("This checkpoint was trained without the pixel color transform")
    manifest = load_dataset(args.data)[args.split]
    out = args.out or os.path.join(os.path.dirname(_checkpoint_dir(args.checkpoint)), "pct")
    ensure_output_dir(out, args.force)
    network.set_mode("eval")

    streams = [Modality.RGB] if network.regime == Regime.CC else [Modality.RGB, Modality.IR]
    for stream in streams:
        gain = effective_channel_gain(network.pct, stream)
        logger.info(
            "%s channel gain (rows R,G,B -> output R,G,B):\n%s",
            stream.value,
            pd.DataFrame(gain, index=list("RGB"), columns=list("RGB")).round(4).to_string(),
        )

    rows = [row for row in manifest.rows if row.modality in streams]
    if args.limit:
        rows = rows[: args.limit]
    paths = []
    for row in rows:
        pixels = manifest.load_image(row).pixels[None].astype(network.dtype)
        transformed = pct_forward(pixels, row.modality, network.pct).data[0]
        name = os.path.splitext(os.path.basename(row.path))[0] + "_pct.png"
        paths.append(save_png(os.path.join(out, name), rescale_for_display(np.asarray(transformed))))
    log_outputs(f"PCT IMAGES WRITTEN ({len(paths)})", [out])
    return 0


def cmd_export(args):
    """Convert report, ablation or training-log CSVs to one long-format CSV."""
    frames = [to_long_format(require_file(path, "CSV file")) for path in args.inputs]
    frame = pd.concat(frames, ignore_index=True)
    out = args.out or os.path.splitext(args.inputs[0])[0] + "_long.csv"
    write_csv(out, frame.to_dict("records"), LONG_COLUMNS)
    log_outputs(f"LONG TABLE WRITTEN ({len(frame)} rows)", [out])
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "pct-apply": cmd_pct_apply,
    "export": cmd_export,
}


def dispatch(args):
    """Run the handler of ``args.command``."""
    handler = COMMANDS.get(args.command)
    if handler is None:
        raise ConfigError(f"Unknown command {args.command!r}")
    return handler(args)
