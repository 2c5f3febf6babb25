"""Cross-camera mapping and imaginary-camera synthesis.

Training images from any camera are lifted into a shared XYZ pool (white
balance, then the interpolated forward matrix).  New training pairs are made
by re-lighting a pooled scene with an illuminant drawn from the source
camera's fitted illuminant curve, mapping that illuminant into a target
camera, rendering the scene into both cameras' raw spaces, and convexly
blending the pair: images, ground truths, and all four calibration matrices
share a single blend weight, which is exactly how a sensor with interpolated
spectral sensitivity would respond.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .colorimetry import (
    CameraCalibration,
    illuminant_raw_to_xyz_cct,
    interpolate_ccm,
)
from .dataio import DatasetManifest, read_pfm
from .errors import (
    ConvergenceError,
    DomainError,
    NumericError,
    ShapeError,
)
from .histogram import RawImage, rgb_to_uv, uv_to_rgb

log = logging.getLogger(__name__)

DEFAULT_JITTER_SIGMA = 0.02


def white_balance(image: RawImage, illum) -> RawImage:
    """Divide out the green-normalized illuminant, channel by channel."""
    illum = np.asarray(illum, dtype=np.float64)
    if illum.shape != (3,) or np.any(illum <= 0) or not np.all(np.isfinite(illum)):
        raise DomainError("illuminant channels must be positive and finite")
    tint = illum / illum[1]
    return RawImage(pixels=image.pixels / tint,
                    saturation_level=image.saturation_level)


def apply_tint(image: RawImage, illum) -> RawImage:
    """Inverse of white_balance: re-light with the green-normalized illuminant."""
    illum = np.asarray(illum, dtype=np.float64)
    if illum.shape != (3,) or np.any(illum <= 0):
        raise DomainError("illuminant channels must be positive")
    tint = illum / illum[1]
    return RawImage(pixels=image.pixels * tint,
                    saturation_level=image.saturation_level)


@dataclass
class XyzImage:
    pixels: np.ndarray  # (H, W, 3) scene tristimulus
    source_camera_id: str
    source_cct: float

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ShapeError(f"expected HxWx3 XYZ pixels, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)) or np.any(pixels < 0):
            raise DomainError("XYZ pixels must be finite and non-negative")
        self.pixels = pixels


def to_xyz_pool(manifest: DatasetManifest) -> tuple[list[XyzImage], int]:
    """White-balance every manifest image and lift it to XYZ.

    Images whose illuminant fixed point fails to converge are skipped with a
    warning; the second return value counts them.
    """
    pool: list[XyzImage] = []
    skipped = 0
    for entry in manifest.entries:
        cal = manifest.calibrations[entry.camera_id]
        try:
            _, cct = illuminant_raw_to_xyz_cct(entry.gt_illuminant, cal)
        except (ConvergenceError, NumericError, DomainError) as exc:
            log.warning("skipping %s: %s", entry.image_path, exc)
            skipped += 1
            continue
        image = read_pfm(entry.image_path)
        wb = white_balance(image, entry.gt_illuminant)
        fm = interpolate_ccm(cct, cal, "forward_matrix")
        xyz = wb.pixels @ fm.T
        pool.append(XyzImage(pixels=np.maximum(xyz, 0.0),
                             source_camera_id=entry.camera_id,
                             source_cct=cct))
    return pool, skipped


@dataclass(frozen=True)
class IlluminantPool:
    """Cubic fit v(u) to a camera's ground-truth illuminants, with jitter."""

    camera_id: str
    gt_illuminants: np.ndarray  # (n, 3)
    poly_coeffs: np.ndarray  # ascending: v = c0 + c1 u + c2 u^2 + c3 u^3
    u_range: tuple[float, float]
    jitter_sigma: float
    residual_rms: float


def fit_illuminant_poly(gts, camera_id: str = "",
                        jitter_sigma: float = DEFAULT_JITTER_SIGMA) -> IlluminantPool:
    """Least-squares cubic through the illuminants' log-chroma coordinates."""
    gts = np.asarray(gts, dtype=np.float64)
    if gts.ndim != 2 or gts.shape[1] != 3 or len(gts) < 4:
        raise DomainError("need at least 4 ground-truth illuminants")
    uv = np.array([rgb_to_uv(g) for g in gts])
    u, v = uv[:, 0], uv[:, 1]
    if np.unique(u).size <= 3:
        raise NumericError(
            f"cubic fit for {camera_id or 'camera'} is rank-deficient: "
            f"{np.unique(u).size} distinct u values")
    coeffs = np.polynomial.polynomial.polyfit(u, v, 3)
    resid = v - np.polynomial.polynomial.polyval(u, coeffs)
    return IlluminantPool(
        camera_id=camera_id, gt_illuminants=gts, poly_coeffs=coeffs,
        u_range=(float(u.min()), float(u.max())),
        jitter_sigma=float(jitter_sigma),
        residual_rms=float(np.sqrt(np.mean(resid * resid))))


def sample_augmented_illuminant(pool: IlluminantPool,
                                rng: np.random.Generator) -> np.ndarray:
    """Draw an illuminant on (or jittered off) the fitted curve."""
    u = rng.uniform(*pool.u_range)
    v = float(np.polynomial.polynomial.polyval(u, pool.poly_coeffs))
    v += pool.jitter_sigma * rng.standard_normal()
    return uv_to_rgb((u, v))


def map_illuminant(illum_a, cal_a: CameraCalibration,
                   cal_b: CameraCalibration, tol: float = 1e-9) -> np.ndarray:
    """Express camera A's illuminant color in camera B's raw space.

    Runs the fixed point tighter than its public default so that mapping
    there and back is uv-identical well within 1e-6.
    """
    xyz, cct = illuminant_raw_to_xyz_cct(illum_a, cal_a, tol=tol)
    return interpolate_ccm(cct, cal_b, "color_matrix") @ xyz


def render_to_camera(xyz: XyzImage, cal: CameraCalibration, illum_native,
                     cct: float) -> tuple[RawImage, np.ndarray]:
    """Render a pooled XYZ scene into a camera's raw space under one light.

    Applies the inverse interpolated forward matrix at `cct`, then the
    green-normalized native illuminant.  Returns the raw image and the
    green-normalized illuminant as its ground truth.
    """
    illum_native = np.asarray(illum_native, dtype=np.float64)
    if illum_native.shape != (3,) or np.any(illum_native <= 0):
        raise DomainError("native illuminant must be positive")
    fm = interpolate_ccm(cct, cal, "forward_matrix")
    cond = np.linalg.cond(fm)
    if not np.isfinite(cond) or cond >= 1e8:
        raise NumericError(f"interpolated forward matrix singular (cond={cond:.3g})")
    wb_raw = np.linalg.solve(fm, xyz.pixels.reshape(-1, 3).T).T.reshape(xyz.pixels.shape)
    gt = illum_native / illum_native[1]
    return RawImage(pixels=wb_raw * gt, saturation_level=1e4), gt


def blend_calibrations(cal_a: CameraCalibration, cal_b: CameraCalibration,
                       alpha: float, camera_id: str | None = None) -> CameraCalibration:
    """Entry-wise blend of all four matrices; endpoints must agree on CCTs."""
    if not (cal_a.cct_low == cal_b.cct_low and cal_a.cct_high == cal_b.cct_high):
        raise DomainError("cannot blend calibrations with different calibration CCTs")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha {alpha} outside [0, 1]")
    if camera_id is None:
        camera_id = f"{cal_a.camera_id}*{alpha:.4f}+{cal_b.camera_id}"
    if alpha == 1.0:
        return CameraCalibration(
            cm_low=cal_a.cm_low, cm_high=cal_a.cm_high,
            fm_low=cal_a.fm_low, fm_high=cal_a.fm_high,
            cct_low=cal_a.cct_low, cct_high=cal_a.cct_high, camera_id=camera_id)
    if alpha == 0.0:
        return CameraCalibration(
            cm_low=cal_b.cm_low, cm_high=cal_b.cm_high,
            fm_low=cal_b.fm_low, fm_high=cal_b.fm_high,
            cct_low=cal_b.cct_low, cct_high=cal_b.cct_high, camera_id=camera_id)
    beta = 1.0 - alpha
    return CameraCalibration(
        cm_low=alpha * cal_a.cm_low + beta * cal_b.cm_low,
        cm_high=alpha * cal_a.cm_high + beta * cal_b.cm_high,
        fm_low=alpha * cal_a.fm_low + beta * cal_b.fm_low,
        fm_high=alpha * cal_a.fm_high + beta * cal_b.fm_high,
        cct_low=cal_a.cct_low, cct_high=cal_a.cct_high, camera_id=camera_id)


def synthesize_imaginary(pair_a: RawImage, pair_b: RawImage, gt_a, gt_b,
                         cal_a: CameraCalibration, cal_b: CameraCalibration,
                         alpha: float) -> tuple[RawImage, np.ndarray, CameraCalibration]:
    """Blend two renderings of the same scene into an imaginary camera.

    At alpha = 1 the result is camera A verbatim; at alpha = 0, camera B.
    Image, ground truth, and calibration all use the same weight.
    """
    if pair_a.pixels.shape != pair_b.pixels.shape:
        raise ShapeError(
            f"pair shapes differ: {pair_a.pixels.shape} vs {pair_b.pixels.shape}")
    gt_a = np.asarray(gt_a, dtype=np.float64)
    gt_b = np.asarray(gt_b, dtype=np.float64)
    cal_v = blend_calibrations(cal_a, cal_b, alpha)
    if alpha == 1.0:
        return (RawImage(pair_a.pixels.copy(), pair_a.saturation_level),
                gt_a.copy(), cal_v)
    if alpha == 0.0:
        return (RawImage(pair_b.pixels.copy(), pair_b.saturation_level),
                gt_b.copy(), cal_v)
    beta = 1.0 - alpha
    image = RawImage(pixels=alpha * pair_a.pixels + beta * pair_b.pixels,
                     saturation_level=min(pair_a.saturation_level,
                                          pair_b.saturation_level))
    return image, alpha * gt_a + beta * gt_b, cal_v


@dataclass
class AugmentedSample:
    image: RawImage
    gt_illuminant: np.ndarray
    calibration: CameraCalibration
    provenance: dict


@dataclass
class AugmentationContext:
    """Precomputed pools for repeated augmented-sample drawing."""

    pool: list[XyzImage]
    illuminant_pools: dict[str, IlluminantPool]
    calibrations: dict[str, CameraCalibration]
    camera_ids: list[str]
    skipped: int = 0


def build_augmentation_context(manifest: DatasetManifest,
                               jitter_sigma: float = DEFAULT_JITTER_SIGMA) -> AugmentationContext:
    pool, skipped = to_xyz_pool(manifest)
    if not pool:
        raise DomainError("no images survived XYZ pooling")
    by_camera: dict[str, list[np.ndarray]] = {}
    for entry in manifest.entries:
        by_camera.setdefault(entry.camera_id, []).append(entry.gt_illuminant)
    pools = {cid: fit_illuminant_poly(np.stack(gts), cid, jitter_sigma)
             for cid, gts in by_camera.items()}
    return AugmentationContext(
        pool=pool, illuminant_pools=pools,
        calibrations=dict(manifest.calibrations),
        camera_ids=sorted(manifest.calibrations), skipped=skipped)


def draw_augmented_sample(ctx: AugmentationContext, rng: np.random.Generator,
                          alpha_mode: str = "uniform",
                          max_attempts: int = 50) -> AugmentedSample:
    """One imaginary-camera training sample.

    The blend weight favors the mapping *target*: alpha = 1 yields the pure
    target-camera rendering (plain cross-camera remapping), alpha = 0 the
    source camera's own re-rendering.  Degenerate draws (failed fixed point,
    out-of-gamut illuminant or pixels) are retried, never papered over.
    """
    if alpha_mode not in ("one", "uniform"):
        raise DomainError(f"unknown alpha mode {alpha_mode!r}")
    last_error = None
    for _ in range(max_attempts):
        scene_idx = int(rng.integers(len(ctx.pool)))
        scene = ctx.pool[scene_idx]
        source_id = scene.source_camera_id
        others = [c for c in ctx.camera_ids if c != source_id]
        target_id = others[int(rng.integers(len(others)))] if others else source_id
        illum_src = sample_augmented_illuminant(
            ctx.illuminant_pools[source_id], rng)
        alpha = 1.0 if alpha_mode == "one" else float(rng.uniform(0.0, 1.0))
        cal_s = ctx.calibrations[source_id]
        cal_t = ctx.calibrations[target_id]
        try:
            xyz_ill, cct = illuminant_raw_to_xyz_cct(illum_src, cal_s)
            illum_tgt = interpolate_ccm(cct, cal_t, "color_matrix") @ xyz_ill
            if np.any(illum_tgt <= 0):
                raise DomainError("mapped illuminant left the target gamut")
            raw_t, gt_t = render_to_camera(scene, cal_t, illum_tgt, cct)
            raw_s, gt_s = render_to_camera(scene, cal_s, illum_src, cct)
            image, gt, cal_v = synthesize_imaginary(
                raw_t, raw_s, gt_t, gt_s, cal_t, cal_s, alpha)
        except (ConvergenceError, NumericError, DomainError) as exc:
            last_error = exc
            continue
        return AugmentedSample(
            image=image, gt_illuminant=gt, calibration=cal_v,
            provenance={"scene_index": scene_idx, "source_camera": source_id,
                        "target_camera": target_id, "alpha": alpha,
                        "cct": cct})
    raise NumericError(
        f"augmentation failed after {max_attempts} attempts: {last_error}")
