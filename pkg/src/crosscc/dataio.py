"""On-disk formats and the synthetic multi-camera dataset generator.

Formats:

* Images are PFM (portable floatmap), color "PF" or grayscale "Pf", 32-bit
  floats, bottom-up row order.  We always write a -1.0 scale header
  (little-endian); on read the scale's sign selects the byte order and its
  magnitude is ignored.
* Camera metadata is a UTF-8 key/value sidecar: `cm1 = <9 floats>` (likewise
  cm2/fm1/fm2, row-major) plus `calib1_cct` / `calib2_cct`.
* A manifest lists one image per line, `image_path, r, g, b, camera_id`,
  followed by a `[cameras]` section mapping camera ids to metadata paths.
  Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .colorimetry import (
    CALIB_CCT_HIGH,
    CALIB_CCT_LOW,
    CameraCalibration,
    cct_to_xy,
    interpolation_weight,
    xy_to_xyz,
)
from .errors import DomainError, FormatError, LoadError
from .histogram import RawImage

DEFAULT_SATURATION = 1e4

_METADATA_MATRIX_KEYS = ("cm1", "cm2", "fm1", "fm2")


# ---------------------------------------------------------------------------
# PFM


def write_pfm_array(path: str, arr: np.ndarray):
    """Write (H, W) or (H, W, 3) float data as Pf/PF, bottom row first."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise FormatError(f"cannot encode array of shape {arr.shape} as PFM")
    h, w = arr.shape[:2]
    data = np.flipud(arr).astype("<f4")
    with open(path, "wb") as f:
        f.write(tag + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data).tobytes())


def _read_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    # Tokens are separated by single whitespace bytes per the PFM convention.
    end = pos
    while end < len(blob) and blob[end] not in b" \t\r\n":
        end += 1
    if end == pos or end >= len(blob):
        raise FormatError(f"malformed PFM header at byte {pos}")
    return blob[pos:end], end + 1


def read_pfm_array(path: str) -> np.ndarray:
    """Read a PFM file into (H, W) or (H, W, 3) float32, top row first."""
    with open(path, "rb") as f:
        blob = f.read()
    tag, pos = _read_token(blob, 0)
    if tag == b"PF":
        channels = 3
    elif tag == b"Pf":
        channels = 1
    else:
        raise FormatError(f"bad PFM magic {tag!r} at byte 0")
    wtok, pos = _read_token(blob, pos)
    htok, pos = _read_token(blob, pos)
    stok, pos = _read_token(blob, pos)
    try:
        w, h = int(wtok), int(htok)
        scale = float(stok)
    except ValueError as exc:
        raise FormatError(f"malformed PFM dimensions near byte {pos}") from exc
    if w <= 0 or h <= 0 or scale == 0:
        raise FormatError("non-positive PFM dimensions or zero scale")
    count = w * h * channels
    payload = blob[pos:pos + 4 * count]
    if len(payload) != 4 * count:
        raise FormatError(
            f"truncated PFM payload at byte {pos + len(payload)}: "
            f"wanted {4 * count} bytes, have {len(payload)}")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    arr = arr.reshape(h, w) if channels == 1 else arr.reshape(h, w, 3)
    return np.flipud(arr).copy()


def read_pfm(path: str, saturation_level: float = DEFAULT_SATURATION) -> RawImage:
    arr = read_pfm_array(path)
    if arr.ndim != 3:
        raise FormatError(f"{path}: expected a color PFM, got grayscale")
    return RawImage(pixels=arr.astype(np.float64), saturation_level=saturation_level)


def write_pfm(path: str, image: RawImage):
    write_pfm_array(path, image.pixels)


# ---------------------------------------------------------------------------
# camera metadata


@dataclass(frozen=True)
class CameraMetadataRecord:
    camera_id: str
    cm1: np.ndarray
    cm2: np.ndarray
    fm1: np.ndarray
    fm2: np.ndarray
    calib1_cct: float = CALIB_CCT_LOW
    calib2_cct: float = CALIB_CCT_HIGH

    def to_calibration(self) -> CameraCalibration:
        return CameraCalibration(
            cm_low=self.cm1, cm_high=self.cm2,
            fm_low=self.fm1, fm_high=self.fm2,
            cct_low=self.calib1_cct, cct_high=self.calib2_cct,
            camera_id=self.camera_id)


def write_camera_metadata(path: str, cal: CameraCalibration):
    lines = [f"camera_id = {cal.camera_id}"]
    for key, m in (("cm1", cal.cm_low), ("cm2", cal.cm_high),
                   ("fm1", cal.fm_low), ("fm2", cal.fm_high)):
        vals = " ".join(repr(float(v)) for v in np.asarray(m).reshape(9))
        lines.append(f"{key} = {vals}")
    lines.append(f"calib1_cct = {repr(float(cal.cct_low))}")
    lines.append(f"calib2_cct = {repr(float(cal.cct_high))}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_camera_metadata(path: str, camera_id: str | None = None) -> CameraCalibration:
    """Parse and validate a camera metadata sidecar."""
    if not os.path.isfile(path):
        raise LoadError(f"camera metadata file not found: {path}")
    fields: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise LoadError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    matrices = {}
    for key in _METADATA_MATRIX_KEYS:
        if key not in fields:
            raise LoadError(f"{path}: missing required key {key!r}")
        parts = fields[key].split()
        if len(parts) != 9:
            raise LoadError(f"{path}: {key} needs 9 values, got {len(parts)}")
        try:
            matrices[key] = np.array([float(p) for p in parts]).reshape(3, 3)
        except ValueError as exc:
            raise LoadError(f"{path}: {key} has a non-numeric entry") from exc
    record = CameraMetadataRecord(
        camera_id=camera_id or fields.get("camera_id", os.path.basename(path)),
        cm1=matrices["cm1"], cm2=matrices["cm2"],
        fm1=matrices["fm1"], fm2=matrices["fm2"],
        calib1_cct=float(fields.get("calib1_cct", CALIB_CCT_LOW)),
        calib2_cct=float(fields.get("calib2_cct", CALIB_CCT_HIGH)))
    try:
        return record.to_calibration()
    except Exception as exc:
        raise LoadError(f"{path}: invalid calibration: {exc}") from exc


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str  # absolute, resolved at load
    gt_illuminant: np.ndarray
    camera_id: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    camera_files: dict[str, str]
    calibrations: dict[str, CameraCalibration]
    root: str = "."

    def __len__(self) -> int:
        return len(self.entries)


def write_manifest(path: str, records: list[tuple[str, np.ndarray, str]],
                   camera_files: dict[str, str]):
    """Write records of (relative image path, gt rgb, camera id)."""
    lines = []
    for image_path, gt, camera_id in records:
        gt = np.asarray(gt, dtype=np.float64)
        vals = ", ".join(repr(float(v)) for v in gt)
        lines.append(f"{image_path}, {vals}, {camera_id}")
    lines.append("")
    lines.append("[cameras]")
    for camera_id in sorted(camera_files):
        lines.append(f"{camera_id} = {camera_files[camera_id]}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_manifest(path: str) -> DatasetManifest:
    """Load and strictly validate a manifest and every camera it references."""
    if not os.path.isfile(path):
        raise LoadError(f"manifest not found: {path}")
    root = os.path.dirname(os.path.abspath(path))
    raw_entries: list[tuple[str, np.ndarray, str]] = []
    camera_files: dict[str, str] = {}
    in_cameras = False
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "[cameras]":
                in_cameras = True
                continue
            if in_cameras:
                if "=" not in line:
                    raise LoadError(f"{path}:{lineno}: expected 'id = metadata_path'")
                camera_id, _, meta = line.partition("=")
                camera_files[camera_id.strip()] = meta.strip()
            else:
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 5:
                    raise LoadError(
                        f"{path}:{lineno}: expected 'image, r, g, b, camera_id'")
                try:
                    gt = np.array([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise LoadError(f"{path}:{lineno}: non-numeric illuminant") from exc
                raw_entries.append((parts[0], gt, parts[4]))

    calibrations: dict[str, CameraCalibration] = {}
    for camera_id, meta in camera_files.items():
        meta_path = meta if os.path.isabs(meta) else os.path.join(root, meta)
        calibrations[camera_id] = load_camera_metadata(meta_path, camera_id)

    entries = []
    for image_path, gt, camera_id in raw_entries:
        if camera_id not in calibrations:
            raise LoadError(
                f"{path}: image {image_path!r} references unknown camera "
                f"{camera_id!r}")
        full = image_path if os.path.isabs(image_path) else os.path.join(root, image_path)
        if not os.path.isfile(full):
            raise LoadError(f"{path}: missing image file {image_path!r}")
        entries.append(ManifestEntry(image_path=full, gt_illuminant=gt,
                                     camera_id=camera_id))
    return DatasetManifest(entries=entries, camera_files=dict(camera_files),
                           calibrations=calibrations, root=root)


# ---------------------------------------------------------------------------
# synthetic cameras and scenes


@dataclass(frozen=True)
class SyntheticCameraSpec:
    """A camera whose raw response is exactly the two-point interpolation of
    its matrices, so calibrated and true behavior coincide at every CCT."""

    m_low: np.ndarray
    m_high: np.ndarray
    camera_id: str

    def response(self, cct: float) -> np.ndarray:
        g = interpolation_weight(cct, CALIB_CCT_LOW, CALIB_CCT_HIGH)
        return g * self.m_low + (1.0 - g) * self.m_high

    def to_calibration(self) -> CameraCalibration:
        ill_low = self.m_low @ _LOCUS_XYZ_LOW
        ill_high = self.m_high @ _LOCUS_XYZ_HIGH
        fm1 = np.linalg.inv(self.m_low) @ np.diag(ill_low / ill_low[1])
        fm2 = np.linalg.inv(self.m_high) @ np.diag(ill_high / ill_high[1])
        return CameraCalibration(
            cm_low=self.m_low, cm_high=self.m_high, fm_low=fm1, fm_high=fm2,
            camera_id=self.camera_id)


def _locus_xyz(cct: float) -> np.ndarray:
    return xy_to_xyz(*cct_to_xy(cct))


_LOCUS_XYZ_LOW = _locus_xyz(CALIB_CCT_LOW)
_LOCUS_XYZ_HIGH = _locus_xyz(CALIB_CCT_HIGH)

# Componentwise bounds of reflectance * locus XYZ over the scene model
# (reflectance channels in [0.1, 1], CCT in [2500, 7500]).
_P_MIN = np.array([0.0949, 0.1, 0.0265])
_P_MAX = np.array([1.152, 1.0, 1.225])

_PLANCK_GRID_XYZ = np.stack([_locus_xyz(t) for t in np.arange(2500.0, 7501.0, 100.0)])


def _worst_case_row_min(m: np.ndarray) -> float:
    lo = np.where(m > 0, m * _P_MIN, m * _P_MAX)
    return float(lo.sum(axis=1).min())


def _locus_uv_bounds(m: np.ndarray) -> tuple[float, float, float, float]:
    rgb = _PLANCK_GRID_XYZ @ m.T
    if np.any(rgb <= 0):
        return (-np.inf, np.inf, -np.inf, np.inf)
    u = np.log(rgb[:, 1] / rgb[:, 0])
    v = np.log(rgb[:, 1] / rgb[:, 2])
    return float(u.min()), float(u.max()), float(v.min()), float(v.max())


def random_camera_spec(rng: np.random.Generator, camera_id: str,
                       max_attempts: int = 1000) -> SyntheticCameraSpec:
    """Draw a well-conditioned, positive-response camera.

    Row scales favor a strong green channel (as real sensors do), so the
    camera's illuminant locus stays inside the standard fingerprint window
    [-0.5, 1.5]; draws are rejected unless both matrices keep every
    renderable pixel strictly positive, have condition number below 100,
    and keep the locus inside that window with margin.
    """
    for _ in range(max_attempts):
        def draw():
            m = rng.uniform(-0.10, 0.18, size=(3, 3))
            m[0, 0] = rng.uniform(0.80, 1.05)
            m[1, 1] = rng.uniform(1.10, 1.40)
            m[2, 2] = rng.uniform(0.80, 1.05)
            return m

        m_low = draw()
        m_high = m_low + rng.uniform(-0.09, 0.09, size=(3, 3))
        if not (np.linalg.cond(m_low) < 100 and np.linalg.cond(m_high) < 100
                and _worst_case_row_min(m_low) > 0.02
                and _worst_case_row_min(m_high) > 0.02):
            continue
        # Interpolated responses are convex combinations of the endpoints, so
        # endpoint locus bounds bound every intermediate CCT too.
        inside = True
        for m in (m_low, m_high):
            u0, u1, v0, v1 = _locus_uv_bounds(m)
            if not (-0.4 <= u0 and u1 <= 1.4 and -0.4 <= v0 and v1 <= 1.4):
                inside = False
                break
        if inside:
            return SyntheticCameraSpec(m_low=m_low, m_high=m_high,
                                       camera_id=camera_id)
    raise DomainError("could not draw a valid synthetic camera")


def _random_edges(rng: np.random.Generator, size: int, parts: int) -> np.ndarray:
    """Uneven tile boundaries: 0 and size plus sorted interior cuts."""
    if parts <= 1:
        return np.array([0, size])
    cuts = np.sort(rng.uniform(0.15, 0.85, size=parts - 1)) * size
    edges = np.concatenate([[0], np.round(cuts).astype(int), [size]])
    return np.maximum.accumulate(edges)


def synth_scene(rng: np.random.Generator, spec: SyntheticCameraSpec,
                size: int = 32, cct_range: tuple[float, float] = (2500.0, 7500.0),
                luma_noise: float = 0.05) -> tuple[RawImage, np.ndarray, float]:
    """Render one random patch scene; returns (image, gt illuminant, cct).

    The scene is a rectangular tiling of 8..32 distinct reflectances, always
    including one neutral patch, lit by a locus illuminant at a uniform
    random CCT and rendered through the camera response.  Per-pixel
    luminance noise is a scalar factor, so chromaticity is untouched.
    """
    cct = float(rng.uniform(*cct_range))
    illum_xyz = _locus_xyz(cct)
    k = int(rng.integers(8, 33))
    # Log-uniform reflectances bias scenes away from statistical neutrality,
    # keeping gray-world an honest (beatable) baseline.
    refl = np.exp(rng.uniform(np.log(0.1), np.log(1.0), size=(k, 3)))
    refl[0] = rng.uniform(0.3, 0.9)  # neutral patch
    rows = max(1, int(np.sqrt(k)))
    cols = int(np.ceil(k / rows))
    row_edges = _random_edges(rng, size, rows)
    col_edges = _random_edges(rng, size, cols)
    refl_map = np.zeros((size, size, 3))
    for i in range(rows):
        for j in range(cols):
            idx = (i * cols + j) % k
            refl_map[row_edges[i]:row_edges[i + 1],
                     col_edges[j]:col_edges[j + 1]] = refl[idx]
    response = spec.response(cct)
    xyz = refl_map * illum_xyz
    raw = xyz @ response.T
    if luma_noise > 0:
        raw = raw * np.exp(luma_noise * rng.standard_normal((size, size)))[..., None]
    gt = response @ illum_xyz
    return RawImage(pixels=raw, saturation_level=DEFAULT_SATURATION), gt, cct


def generate_synthetic_dataset(out_dir: str, n_cameras: int,
                               scenes_per_camera: int, seed: int,
                               size: int = 32) -> str:
    """Materialize a synthetic multi-camera dataset; returns the manifest path.

    Deterministic for a given seed: same seed, byte-identical tree.
    """
    if n_cameras < 1:
        raise DomainError("need at least one camera")
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "cameras"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    records = []
    camera_files = {}
    for ci in range(n_cameras):
        camera_id = f"cam{ci:02d}"
        spec = random_camera_spec(rng, camera_id)
        cal = spec.to_calibration()
        meta_rel = os.path.join("cameras", f"{camera_id}.txt")
        write_camera_metadata(os.path.join(out_dir, meta_rel), cal)
        camera_files[camera_id] = meta_rel
        for si in range(scenes_per_camera):
            image, gt, _ = synth_scene(rng, spec, size=size)
            img_rel = os.path.join("images", f"{camera_id}_s{si:04d}.pfm")
            write_pfm(os.path.join(out_dir, img_rel), image)
            records.append((img_rel, gt, camera_id))
    manifest_path = os.path.join(out_dir, "manifest.txt")
    write_manifest(manifest_path, records, camera_files)
    return manifest_path
