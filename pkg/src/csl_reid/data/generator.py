"""Procedural synthetic person images.

Identity lives in body geometry and a torso speckle pattern; clothing color
is a nuisance. IR images are the luminance of the RGB render plus noise, so
color carries no information across modalities.
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from tqdm import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from csl_reid.color_aug import Image
from csl_reid.config import IMAGE_HEIGHT, IMAGE_WIDTH, IR_NOISE_SIGMA, LUMA_WEIGHTS, Modality, Regime
from csl_reid.data.image_io import save_png
from csl_reid.data.manifest import DatasetManifest, ManifestRow, check_disjoint, manifest_paths
from csl_reid.run_config import DataConfig

logger = logging.getLogger(__name__)

# Speckle grid laid over the torso (rows x cols), fixed per identity.
TEXTURE_GRID = (6, 4)
TEXTURE_CONTRAST = 0.45
# Half-widths of the view and per-image jitter; together they stay within +-10%.
VIEW_JITTER = 0.05
IMAGE_JITTER = 0.05
SKIN_TINT = (1.0, 0.86, 0.74)
VIEW_SEED_BASE = 7919


@dataclass(frozen=True)
class IdentitySpec:
    """Seeded appearance of one synthetic person (pixel units at 64 x 32)."""

    id: int
    head_radius: float
    torso_width: float
    torso_height: float
    leg_width: float
    skin_tone: float
    texture_seed: int
    base_cloth_colors: Tuple[Tuple[Tuple[float, float, float], Tuple[float, float, float]], ...]

    def __post_init__(self):
        if not 0.3 <= self.skin_tone <= 0.8:
            raise ValueError(f"skin_tone must lie in [0.3, 0.8], got {self.skin_tone}")
        if not self.base_cloth_colors:
            raise ValueError("An identity needs at least one clothing set")

    @property
    def texture(self) -> np.ndarray:
        """Speckle pattern with values in {-1, 0, 1}."""
        return np.random.default_rng(self.texture_seed).integers(-1, 2, size=TEXTURE_GRID).astype(np.float64)


@dataclass(frozen=True)
class ViewJitter:
    dx: float
    scale: float


def make_identity_spec(identity: int, clothing_sets: int, seed: int) -> IdentitySpec:
    rng = np.random.default_rng([seed, identity, 101])
    colors = tuple(
        (tuple(rng.uniform(0.05, 0.95, 3)), tuple(rng.uniform(0.05, 0.95, 3))) for _ in range(clothing_sets)
    )
    return IdentitySpec(
        id=identity,
        head_radius=float(rng.uniform(3.5, 5.5)),
        torso_width=float(rng.uniform(9.0, 16.0)),
        torso_height=float(rng.uniform(17.0, 24.0)),
        leg_width=float(rng.uniform(2.5, 4.5)),
        skin_tone=float(rng.uniform(0.3, 0.8)),
        texture_seed=int(rng.integers(2**31)),
        base_cloth_colors=colors,  # type: ignore[arg-type]
    )


def view_setting(view: int) -> Tuple[np.ndarray, ViewJitter]:
    """Background color and base jitter of one camera view."""
    rng = np.random.default_rng(VIEW_SEED_BASE + view)
    background = rng.uniform(0.1, 0.9, 3)
    shift = float(rng.uniform(-VIEW_JITTER, VIEW_JITTER))
    scale = float(1 + rng.uniform(-VIEW_JITTER, VIEW_JITTER))
    return background, ViewJitter(shift, scale)


def draw_jitter(view: int, rng: np.random.Generator) -> ViewJitter:
    """Total horizontal offset (fraction of width) and scale of one render."""
    _, base = view_setting(view)
    dx = base.dx + float(rng.uniform(-IMAGE_JITTER, IMAGE_JITTER))
    scale = base.scale + float(rng.uniform(-IMAGE_JITTER, IMAGE_JITTER))
    return ViewJitter(dx, scale)


def body_masks(
    spec: IdentitySpec, jitter: ViewJitter, height: int = IMAGE_HEIGHT, width: int = IMAGE_WIDTH
) -> Dict[str, np.ndarray]:
    """Pixel masks of head, torso and legs plus torso-relative coordinates.

    The layout is defined on the 64 x 32 canvas and rescaled to
    ``height x width``.
    """
    sy, sx = height / IMAGE_HEIGHT, width / IMAGE_WIDTH
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    u = (cols / sx - (IMAGE_WIDTH / 2 + jitter.dx * IMAGE_WIDTH)) / jitter.scale
    v = (rows / sy - 2.0) / jitter.scale
    r = spec.head_radius
    head = u ** 2 + (v - r) ** 2 <= r ** 2
    torso_top = 2 * r + 0.5
    torso_bottom = torso_top + spec.torso_height
    half = spec.torso_width / 2
    torso = (np.abs(u) <= half) & (v >= torso_top) & (v < torso_bottom)
    leg_bottom = IMAGE_HEIGHT - 4.0
    inner = max(half - 1.0 - spec.leg_width, 0.5)
    legs = (np.abs(u) >= inner) & (np.abs(u) <= inner + spec.leg_width) & (v >= torso_bottom) & (v < leg_bottom)
    ty = np.clip(((v - torso_top) / spec.torso_height * TEXTURE_GRID[0]).astype(int), 0, TEXTURE_GRID[0] - 1)
    tx = np.clip(((u + half) / spec.torso_width * TEXTURE_GRID[1]).astype(int), 0, TEXTURE_GRID[1] - 1)
    return {"head": head, "torso": torso & ~head, "legs": legs & ~torso, "texture_row": ty, "texture_col": tx}


def luminance(pixels: np.ndarray) -> np.ndarray:
    return np.tensordot(np.asarray(LUMA_WEIGHTS), pixels, axes=1)


def render_sample(
    spec: IdentitySpec,
    view: int,
    clothing: int,
    modality: Modality,
    rng: np.random.Generator,
    height: int = IMAGE_HEIGHT,
    width: int = IMAGE_WIDTH,
    noise_sigma: float = IR_NOISE_SIGMA,
) -> Image:
    """Render one image of ``spec``.

    The jitter is the first draw from ``rng``, so two renders from equally
    seeded generators share every position; only the clothing colors, or
    the IR conversion, differ.

    Raises:
        ValueError: For an unknown clothing set or a negative view.
    """
    if not 0 <= clothing < len(spec.base_cloth_colors):
        raise ValueError(f"Identity {spec.id} has {len(spec.base_cloth_colors)} clothing sets, got {clothing}")
    if view < 0:
        raise ValueError(f"View index must be >= 0, got {view}")
    modality = Modality(modality)
    jitter = draw_jitter(view, rng)
    masks = body_masks(spec, jitter, height, width)
    background, _ = view_setting(view)
    torso_color, legs_color = (np.asarray(c) for c in spec.base_cloth_colors[clothing])

    pixels = np.empty((3, height, width))
    pixels[...] = background[:, None, None]
    speckle = 1.0 + TEXTURE_CONTRAST * spec.texture[masks["texture_row"], masks["texture_col"]]
    torso = masks["torso"]
    pixels[:, torso] = torso_color[:, None] * speckle[torso][None, :]
    pixels[:, masks["legs"]] = legs_color[:, None]
    pixels[:, masks["head"]] = (spec.skin_tone * np.asarray(SKIN_TINT))[:, None]
    pixels = np.clip(pixels, 0.0, 1.0)

    if modality == Modality.IR:
        gray = luminance(pixels) + rng.normal(0.0, noise_sigma, size=(height, width))
        pixels = np.repeat(np.clip(gray, 0.0, 1.0)[None], 3, axis=0)
    return Image(pixels, modality, spec.id, view, clothing)


def image_seed(seed: int, identity: int, view: int, index: int) -> List[int]:
    """Seed of one image cell entry; shared by its modalities and clothing sets."""
    return [seed, identity, view, index]


def _nn_rank1(query: np.ndarray, gallery: np.ndarray, q_meta: np.ndarray, g_meta: np.ndarray, allowed) -> float:
    hits = []
    for i in range(query.shape[0]):
        mask = allowed(q_meta[i], g_meta)
        if not mask.any():
            continue
        dist = ((gallery[mask] - query[i]) ** 2).sum(axis=1)
        hits.append(g_meta[mask][int(np.argmin(dist))]["identity"] == q_meta[i]["identity"])
    return float(np.mean(hits)) if hits else 0.0


def signal_validity(manifest: DatasetManifest) -> Dict[str, float]:
    """Nearest-neighbour Rank-1 on raw pixels of a test split.

    ``gray_nn_rank1`` matches grayscale images across views (and across
    modalities in VI); it must beat ``chance``. In CC, ``rgb_nn_rank1_cc``
    only admits other clothing sets and ``rgb_nn_rank1_same_clothes`` only
    the same set, showing how much color misleads.
    """
    dtype = [("identity", int), ("view", int), ("clothing", int), ("modality", "U3")]
    meta = np.array([(r.identity, r.view, r.clothing, r.modality.value) for r in manifest.rows], dtype=dtype)
    pixels = manifest.load_pixels(manifest.rows).astype(np.float64)
    gray = luminance(pixels.transpose(1, 0, 2, 3)).reshape(len(meta), -1)
    rgb = pixels.reshape(len(meta), -1)
    stats = {"chance": 1.0 / len(manifest.identities())}
    if manifest.regime == Regime.VI:
        q = meta["modality"] == Modality.IR.value
        g = ~q
        stats["gray_nn_rank1"] = _nn_rank1(gray[q], gray[g], meta[q], meta[g], lambda m, gm: gm["view"] != m["view"])
    else:
        stats["gray_nn_rank1"] = _nn_rank1(gray, gray, meta, meta, lambda m, gm: gm["view"] != m["view"])
        stats["rgb_nn_rank1_cc"] = _nn_rank1(
            rgb, rgb, meta, meta, lambda m, gm: (gm["view"] != m["view"]) & (gm["clothing"] != m["clothing"])
        )
        stats["rgb_nn_rank1_same_clothes"] = _nn_rank1(
            rgb, rgb, meta, meta, lambda m, gm: (gm["view"] != m["view"]) & (gm["clothing"] == m["clothing"])
        )
    return stats


def signal_failures(stats: Dict[str, float]) -> List[str]:
    """Messages for every signal-validity property ``stats`` violates.

    Grayscale nearest neighbour must beat chance; in CC, matching across
    clothing sets must score below matching within one set.
    """
    failures = []
    if stats["gray_nn_rank1"] <= stats["chance"]:
        failures.append(
            f"Grayscale nearest neighbour ({stats['gray_nn_rank1']:.3f}) does not beat chance ({stats['chance']:.3f})"
        )
    if "rgb_nn_rank1_cc" in stats and stats["rgb_nn_rank1_cc"] >= stats["rgb_nn_rank1_same_clothes"]:
        failures.append(
            f"RGB nearest neighbour across clothing sets ({stats['rgb_nn_rank1_cc']:.3f}) is not below "
            f"the same-clothes score ({stats['rgb_nn_rank1_same_clothes']:.3f})"
        )
    return failures


def _split_identities(cfg: DataConfig) -> Dict[str, List[int]]:
    return {
        "train": list(range(cfg.n_train_ids)),
        "test": list(range(cfg.n_train_ids, cfg.n_train_ids + cfg.n_test_ids)),
    }


def make_dataset(cfg: DataConfig, out_dir: str, show_progress: bool = True) -> Dict[str, DatasetManifest]:
    """Render both splits into ``out_dir`` and write their manifests.

    VI writes ``views x 2 modalities x images_per_cell`` images per identity
    (one clothing set); CC writes ``views x clothing_sets x
    images_per_cell`` RGB images.

    Returns:
        dict: ``{"train": manifest, "test": manifest}``.

    Raises:
        OSError: Naming the path when an image or manifest cannot be written.
    """
    cfg.validate()
    regime = Regime(cfg.regime)
    modalities = [Modality.RGB, Modality.IR] if regime == Regime.VI else [Modality.RGB]
    clothing_sets = 1 if regime == Regime.VI else cfg.clothing_sets
    os.makedirs(out_dir, exist_ok=True)

    manifests = {}
    for split, identities in _split_identities(cfg).items():
        rows: List[ManifestRow] = []
        total = len(identities) * cfg.views * cfg.images_per_cell * clothing_sets * len(modalities)
        with logging_redirect_tqdm(), tqdm(total=total, desc=f"gen {split}", disable=not show_progress) as bar:
            for identity in identities:
                spec = make_identity_spec(identity, clothing_sets, cfg.seed)
                for view in range(cfg.views):
                    for index in range(cfg.images_per_cell):
                        for clothing in range(clothing_sets):
                            for modality in modalities:
                                rng = np.random.default_rng(image_seed(cfg.seed, identity, view, index))
                                image = render_sample(
                                    spec, view, clothing, modality, rng, cfg.height, cfg.width, cfg.ir_noise_sigma
                                )
                                rel = os.path.join(
                                    "images",
                                    split,
                                    f"{identity:04d}_{modality.value.lower()}_v{view}_c{clothing}_{index:02d}.png",
                                )
                                save_png(os.path.join(out_dir, rel), image.pixels)
                                rows.append(ManifestRow(rel, identity, modality, view, clothing))
                                bar.update(1)
        header = {
            "generator.seed": cfg.seed,
            "generator.views": cfg.views,
            "generator.images_per_cell": cfg.images_per_cell,
            "generator.clothing_sets": clothing_sets,
            "generator.canvas": f"{cfg.height}x{cfg.width}",
            "generator.ir_noise_sigma": cfg.ir_noise_sigma,
        }
        manifest = DatasetManifest(rows, split, regime, out_dir, {k: str(v) for k, v in header.items()})
        manifest.check_invariants()
        manifests[split] = manifest
        logger.info("Rendered %d %s images for %d identities", len(rows), split, len(identities))

    check_disjoint(manifests["train"], manifests["test"])
    stats = signal_validity(manifests["test"])
    for key, value in stats.items():
        manifests["test"].header[f"stat.{key}"] = f"{value:.4f}"
    for message in signal_failures(stats):
        logger.warning(message)
    logger.info("Signal validity: %s", ", ".join(f"{k}={v:.3f}" for k, v in stats.items()))

    for split, path in manifest_paths(out_dir).items():
        try:
            manifests[split].write_csv(path)
        except OSError as exc:
            raise OSError(f"Could not write manifest {path}: {exc}") from exc
    return manifests
