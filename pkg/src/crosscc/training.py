"""Joint training of the hypernetwork and the fingerprint encoder.

Histograms (image, edge, and per-camera locus) are precomputed once per
sample; each optimizer step re-encodes the batch's locus histograms so the
fingerprint encoder and the backbone learn together under a single angular
error loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .augmentation import build_augmentation_context, draw_augmented_sample
from .cfe import CfeEncoderConfig, cfe_apply, cfe_histogram, guidance_illuminants
from .dataio import DatasetManifest, read_pfm
from .errors import ConfigError, DomainError, NumericError
from .estimator import BackboneConfig, Model, backbone_apply, ccc_heatmap, init_model
from .histogram import CFE_SPEC, QUERY_SPEC, HistogramSpec, build_histogram, edge_image
from .nn.autograd import (
    Tape,
    Tensor,
    add,
    backward,
    concat_channels,
    div,
    mul,
    neg,
    select_channel,
    tacos,
    tclip,
    texp,
    tile_spatial,
    tmean,
    tsqrt,
    tsum,
)
from .nn.params import ParameterStore, adam_step

log = logging.getLogger(__name__)

ALPHA_MODES = ("none", "one", "uniform")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 50
    lr: float = 5e-4
    lr_decay: float = 0.5
    lr_decay_epoch: int = 25
    seed: int = 0
    alpha_mode: str = "uniform"
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0 or self.lr <= 0:
            raise ConfigError("batch_size, epochs, and lr must be positive")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(
                f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")


@dataclass
class TrainingSet:
    """Stacked per-sample arrays ready for minibatching."""

    n0: np.ndarray      # (S, bins, bins)
    n1: np.ndarray      # (S, bins, bins)
    locus: np.ndarray   # (S, bins, bins)
    gt: np.ndarray      # (S, 3)

    def __len__(self) -> int:
        return len(self.gt)


def _sample_arrays(image, gt, locus_hist, query_spec):
    n0 = build_histogram(image, query_spec)
    if n0.empty:
        return None
    n1 = build_histogram(edge_image(image), query_spec)
    return n0.data, n1.data, locus_hist, np.asarray(gt, dtype=np.float64)


def prepare_training_set(manifest: DatasetManifest,
                         query_spec: HistogramSpec = QUERY_SPEC,
                         cfe_spec: HistogramSpec = CFE_SPEC,
                         alpha_mode: str = "none",
                         rng: np.random.Generator | None = None,
                         augmented_count: int | None = None) -> TrainingSet:
    """Histogram every manifest image, optionally extended by augmentation.

    With an augmentation mode, draws `augmented_count` (default: as many as
    the original set) imaginary-camera samples and appends them.
    """
    if alpha_mode not in ALPHA_MODES:
        raise ConfigError(f"alpha_mode must be one of {ALPHA_MODES}")
    if len(manifest) == 0:
        raise ConfigError("manifest lists no images")

    locus_cache: dict[str, np.ndarray] = {}
    for cid, cal in manifest.calibrations.items():
        locus_cache[cid] = cfe_histogram(guidance_illuminants(cal), cfe_spec).data

    rows = []
    skipped = 0
    for entry in manifest.entries:
        image = read_pfm(entry.image_path)
        row = _sample_arrays(image, entry.gt_illuminant,
                             locus_cache[entry.camera_id], query_spec)
        if row is None:
            skipped += 1
            continue
        rows.append(row)
    if skipped:
        log.warning("skipped %d images with empty histograms", skipped)
    if not rows:
        raise ConfigError("no usable training samples")

    if alpha_mode != "none":
        if rng is None:
            raise ConfigError("augmentation requires a seeded RNG")
        ctx = build_augmentation_context(manifest)
        count = len(rows) if augmented_count is None else augmented_count
        for _ in range(count):
            s = draw_augmented_sample(ctx, rng, alpha_mode)
            locus = cfe_histogram(
                guidance_illuminants(s.calibration), cfe_spec).data
            row = _sample_arrays(s.image, s.gt_illuminant, locus, query_spec)
            if row is not None:
                rows.append(row)

    return TrainingSet(
        n0=np.stack([r[0] for r in rows]),
        n1=np.stack([r[1] for r in rows]),
        locus=np.stack([r[2] for r in rows]),
        gt=np.stack([r[3] for r in rows]))


def batch_loss(store: ParameterStore, backbone_cfg: BackboneConfig,
               cfe_cfg: CfeEncoderConfig, n0: np.ndarray, n1: np.ndarray,
               locus: np.ndarray, gt: np.ndarray,
               query_spec: HistogramSpec) -> Tensor:
    """Mean angular error (degrees) of a batch, as a differentiable scalar.

    Arrays are (B, bins, bins) histograms and (B, 3) ground-truth colors in
    the dtype the parameters use.
    """
    bins = backbone_cfg.bins
    emb = cfe_apply(Tensor(locus[:, None]), store, cfe_cfg)
    tiled = tile_spatial(emb, bins, bins)
    inp = concat_channels(Tensor(n0[:, None]), Tensor(n1[:, None]), tiled)
    out = backbone_apply(inp, store, backbone_cfg)
    f0 = select_channel(out, 0)
    f1 = select_channel(out, 1)
    bias = select_channel(out, 2)
    heat = ccc_heatmap(Tensor(n0), Tensor(n1), f0, f1, bias)

    dtype = n0.dtype
    ug = np.broadcast_to(query_spec.u_centers().astype(dtype)[:, None],
                         (bins, bins)).copy()
    vg = np.broadcast_to(query_spec.v_centers().astype(dtype)[None, :],
                         (bins, bins)).copy()
    u = tsum(mul(heat, ug), axis=(1, 2))
    v = tsum(mul(heat, vg), axis=(1, 2))
    eu = texp(neg(u))
    ev = texp(neg(v))
    # estimate is (e^-u, 1, e^-v); angular error against gt is scale-free
    dot = add(add(mul(eu, gt[:, 0]), gt[:, 1]), mul(ev, gt[:, 2]))
    norm_est = tsqrt(add(add(mul(eu, eu), 1.0), mul(ev, ev)))
    norm_gt = np.linalg.norm(gt, axis=1).astype(dtype)
    cosv = div(dot, mul(norm_est, norm_gt))
    ang = tacos(tclip(cosv, -1.0 + 1e-7, 1.0 - 1e-7))
    return tmean(mul(ang, 180.0 / math.pi))


def train(manifest: DatasetManifest,
          train_cfg: TrainConfig | None = None,
          backbone_cfg: BackboneConfig | None = None,
          cfe_cfg: CfeEncoderConfig | None = None,
          query_spec: HistogramSpec = QUERY_SPEC,
          cfe_spec: HistogramSpec = CFE_SPEC) -> tuple[Model, list[float]]:
    """Train a model on a manifest; returns it with the per-epoch loss curve.

    Deterministic for a fixed (manifest, config) pair: the same seed yields
    bit-identical parameters and losses.
    """
    train_cfg = train_cfg or TrainConfig()
    dtype = np.float32 if train_cfg.dtype == "float32" else np.float64
    rng = np.random.default_rng(train_cfg.seed)

    data = prepare_training_set(
        manifest, query_spec, cfe_spec,
        alpha_mode=train_cfg.alpha_mode, rng=rng)
    n0 = data.n0.astype(dtype)
    n1 = data.n1.astype(dtype)
    locus = data.locus.astype(dtype)
    gt = data.gt.astype(dtype)

    model = init_model(backbone_cfg, cfe_cfg, query_spec, cfe_spec,
                       seed=int(rng.integers(2**31)), dtype=dtype)
    store = model.store

    n_samples = len(data)
    losses: list[float] = []
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.lr * (train_cfg.lr_decay
                             if epoch >= train_cfg.lr_decay_epoch else 1.0)
        perm = rng.permutation(n_samples)
        epoch_loss = 0.0
        for start in range(0, n_samples, train_cfg.batch_size):
            idx = perm[start:start + train_cfg.batch_size]
            with Tape() as tape:
                loss = batch_loss(store, model.backbone_cfg, model.cfe_cfg,
                                  n0[idx], n1[idx], locus[idx], gt[idx],
                                  query_spec)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, sample {start}")
            backward(tape, loss)
            adam_step(store, lr)
            epoch_loss += value * len(idx)
        losses.append(epoch_loss / n_samples)
    return model, losses
