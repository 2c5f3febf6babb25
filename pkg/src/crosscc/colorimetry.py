"""Color temperature conversions, calibration-matrix interpolation, and the
illuminant RGB -> XYZ/CCT fixed point.

Conventions used throughout:

* CCT is a float in Kelvin, valid over [1667, 25000].
* Chromaticity (x, y) is the CIE 1931 projection X/(X+Y+Z), Y/(X+Y+Z).
* A "color matrix" maps XYZ to camera raw RGB under a given illuminant; a
  "forward matrix" maps white-balanced raw RGB back to XYZ.
* All math is 64-bit.

The locus model is a hybrid of two published cubic approximations: a
Planckian-locus fit below 3500 K and the daylight-locus fit above 4500 K,
linearly cross-faded in between so the curve stays continuous and monotone.
The inverse combines a cubic chromaticity-ratio formula (accurate at low and
mid CCT) with an exponential fit (accurate at high CCT), cross-faded between
6000 K and 7000 K.  The pair round-trips to well under 1% over [2500, 7500] K;
regression tests freeze its exact values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, NumericError

CCT_MIN = 1667.0
CCT_MAX = 25000.0

# Calibration illuminants: standard illuminant A and D65.
CALIB_CCT_LOW = 2856.0
CALIB_CCT_HIGH = 6504.0

# Condition-number ceiling above which a matrix is treated as singular.
MAX_CONDITION = 1e8

# Cross-fade windows for the hybrid locus model.
_FWD_BLEND_LO, _FWD_BLEND_HI = 3500.0, 4500.0
_INV_BLEND_LO, _INV_BLEND_HI = 6000.0, 7000.0

# Default Planckian sampling grid.
PLANCK_LO = 2500.0
PLANCK_HI = 7500.0
PLANCK_STEP = 100.0


def _validate_cct(t: float) -> float:
    t = float(t)
    if not np.isfinite(t) or not (CCT_MIN <= t <= CCT_MAX):
        raise DomainError(
            f"CCT {t!r} outside valid range [{CCT_MIN:.0f}, {CCT_MAX:.0f}] K")
    return t


def _planck_xy(t: float) -> tuple[float, float]:
    """Cubic Planckian-locus approximation (blackbody chromaticity)."""
    if t <= 4000.0:
        x = (-0.2661239e9 / t**3 - 0.2343589e6 / t**2
             + 0.8776956e3 / t + 0.179910)
    else:
        x = (-3.0258469e9 / t**3 + 2.1070379e6 / t**2
             + 0.2226347e3 / t + 0.240390)
    if t <= 2222.0:
        y = -1.1063814 * x**3 - 1.34811020 * x**2 + 2.18555832 * x - 0.20219683
    elif t <= 4000.0:
        y = -0.9549476 * x**3 - 1.37418593 * x**2 + 2.09137015 * x - 0.16748867
    else:
        y = 3.0817580 * x**3 - 5.87338670 * x**2 + 3.75112997 * x - 0.37001483
    return x, y


def _daylight_xy(t: float) -> tuple[float, float]:
    """Cubic daylight-locus approximation (D-series chromaticity)."""
    if t <= 7000.0:
        x = 0.244063 + 0.09911e3 / t + 2.9678e6 / t**2 - 4.6070e9 / t**3
    else:
        x = 0.237040 + 0.24748e3 / t + 1.9018e6 / t**2 - 2.0064e9 / t**3
    y = -3.000 * x * x + 2.870 * x - 0.275
    return x, y


def cct_to_xy(t: float) -> tuple[float, float]:
    """Chromaticity of the reference illuminant locus at color temperature t.

    Uses the Planckian fit below 3500 K, the daylight fit above 4500 K, and a
    linear cross-fade between the two.  Raises DomainError outside
    [1667, 25000] K.
    """
    t = _validate_cct(t)
    if t <= _FWD_BLEND_LO:
        return _planck_xy(t)
    if t >= _FWD_BLEND_HI:
        return _daylight_xy(t)
    w = (t - _FWD_BLEND_LO) / (_FWD_BLEND_HI - _FWD_BLEND_LO)
    px, py = _planck_xy(t)
    dx, dy = _daylight_xy(t)
    return (1.0 - w) * px + w * dx, (1.0 - w) * py + w * dy


def _cct_cubic_ratio(x: float, y: float) -> float:
    # Cubic-in-n inverse; n is the slope toward the convergence epicenter.
    n = (x - 0.3320) / (0.1858 - y)
    return 449.0 * n**3 + 3525.0 * n**2 + 6823.3 * n + 5520.33


def _cct_exponential(x: float, y: float) -> float:
    n = (x - 0.3366) / (y - 0.1735)
    return (-949.86315
            + 6253.80338 * np.exp(-n / 0.92159)
            + 28.70599 * np.exp(-n / 0.20039)
            + 0.00004 * np.exp(-n / 0.07125))


def _xy_to_cct_unchecked(x: float, y: float) -> float:
    """Inverse locus estimate with range clamping but no proximity gate."""
    if not (np.isfinite(x) and np.isfinite(y)):
        raise DomainError("non-finite chromaticity")
    if abs(y - 0.1858) < 1e-3:
        raise DomainError("chromaticity on the inverse formula singularity")
    t0 = _cct_cubic_ratio(x, y)
    if t0 <= _INV_BLEND_LO:
        t = t0
    elif t0 >= _INV_BLEND_HI:
        t = _cct_exponential(x, y)
    else:
        w = (t0 - _INV_BLEND_LO) / (_INV_BLEND_HI - _INV_BLEND_LO)
        t = (1.0 - w) * t0 + w * _cct_exponential(x, y)
    return float(min(max(t, CCT_MIN), CCT_MAX))


def locus_distance(x: float, y: float) -> float:
    """Euclidean xy distance to the locus point at the estimated CCT."""
    t = _xy_to_cct_unchecked(x, y)
    lx, ly = cct_to_xy(t)
    return float(np.hypot(x - lx, y - ly))


def xy_to_cct(x: float, y: float) -> float:
    """Correlated color temperature of a chromaticity near the locus.

    The result is clamped into [1667, 25000] K.  Chromaticities farther than
    0.05 (Euclidean, xy plane) from the locus raise DomainError.
    """
    x = float(x)
    y = float(y)
    t = _xy_to_cct_unchecked(x, y)
    lx, ly = cct_to_xy(t)
    if np.hypot(x - lx, y - ly) >= 0.05:
        raise DomainError(
            f"chromaticity ({x:.4f}, {y:.4f}) too far from the illuminant locus")
    return t


def interpolation_weight(t: float, cct_low: float, cct_high: float) -> float:
    """Mired-space interpolation weight of the low-CCT calibration.

    Returns 1 at cct_low, 0 at cct_high, clamped to [0, 1] outside the
    calibrated interval.
    """
    t = float(t)
    cct_low = float(cct_low)
    cct_high = float(cct_high)
    if t <= 0 or cct_low <= 0 or cct_high <= 0:
        raise DomainError("color temperatures must be positive")
    if not cct_low < cct_high:
        raise DomainError(f"cct_low {cct_low} must be below cct_high {cct_high}")
    g = (1.0 / t - 1.0 / cct_high) / (1.0 / cct_low - 1.0 / cct_high)
    return float(min(max(g, 0.0), 1.0))


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise DomainError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    return m


def _check_invertible(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond >= MAX_CONDITION:
        raise NumericError(f"{what} is numerically singular (cond={cond:.3g})")
    return m


@dataclass(frozen=True)
class CameraCalibration:
    """Per-camera calibration: color and forward matrices at two CCTs.

    cm_low/cm_high map XYZ to camera raw under the low/high calibration
    illuminants; fm_low/fm_high map white-balanced raw back to XYZ.  This is
    the only camera-specific knowledge the estimator is allowed at test time.
    """

    cm_low: np.ndarray
    cm_high: np.ndarray
    fm_low: np.ndarray
    fm_high: np.ndarray
    cct_low: float = CALIB_CCT_LOW
    cct_high: float = CALIB_CCT_HIGH
    camera_id: str = ""

    def __post_init__(self):
        for name in ("cm_low", "cm_high", "fm_low", "fm_high"):
            m = _as_matrix(getattr(self, name))
            _check_invertible(m, name)
            object.__setattr__(self, name, m)
        object.__setattr__(self, "cct_low", _validate_cct(self.cct_low))
        object.__setattr__(self, "cct_high", _validate_cct(self.cct_high))
        if not self.cct_low < self.cct_high:
            raise DomainError("cct_low must be below cct_high")

    def matrices(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        if which == "color_matrix":
            return self.cm_low, self.cm_high
        if which == "forward_matrix":
            return self.fm_low, self.fm_high
        raise DomainError(f"unknown matrix kind {which!r}")


def interpolate_ccm(t: float, cal: CameraCalibration,
                    which: str = "color_matrix") -> np.ndarray:
    """Entry-wise convex combination of the two calibrated matrices at CCT t."""
    low, high = cal.matrices(which)
    g = interpolation_weight(t, cal.cct_low, cal.cct_high)
    if g == 1.0:
        return low.copy()
    if g == 0.0:
        return high.copy()
    return g * low + (1.0 - g) * high


def xy_to_xyz(x: float, y: float) -> np.ndarray:
    """Lift chromaticity to tristimulus with Y = 1."""
    if y <= 0:
        raise DomainError("chromaticity y must be positive to lift to XYZ")
    return np.array([x / y, 1.0, (1.0 - x - y) / y], dtype=np.float64)


def xyz_to_xy(xyz: np.ndarray) -> tuple[float, float]:
    xyz = np.asarray(xyz, dtype=np.float64)
    s = float(xyz.sum())
    if not np.isfinite(s) or s <= 0:
        raise NumericError("tristimulus sum is non-positive or non-finite")
    return float(xyz[0] / s), float(xyz[1] / s)


@dataclass(frozen=True)
class PlanckianSampleSet:
    """Ordered (CCT, XYZ) samples of the reference locus, Y normalized to 1."""

    ccts: np.ndarray
    xyz: np.ndarray  # shape (n, 3)

    def __post_init__(self):
        if len(self.ccts) != len(self.xyz):
            raise DomainError("sample count mismatch")
        if not np.all(np.diff(self.ccts) > 0):
            raise DomainError("sample CCTs must be strictly increasing")

    def __len__(self) -> int:
        return len(self.ccts)

    def __iter__(self):
        return zip(self.ccts, self.xyz)


def planckian_xyz_samples(lo: float = PLANCK_LO, hi: float = PLANCK_HI,
                          step: float = PLANCK_STEP) -> PlanckianSampleSet:
    """Sample the locus every `step` Kelvin from lo to hi inclusive."""
    if not lo < hi:
        raise DomainError("lo must be below hi")
    if step <= 0:
        raise DomainError("step must be positive")
    n = int(round((hi - lo) / step)) + 1
    ccts = lo + step * np.arange(n, dtype=np.float64)
    ccts = ccts[ccts <= hi + 1e-9]
    xyz = np.stack([xy_to_xyz(*cct_to_xy(t)) for t in ccts])
    return PlanckianSampleSet(ccts=ccts, xyz=xyz)


def raw_from_xyz(xyz: np.ndarray, t: float, cal: CameraCalibration) -> np.ndarray:
    """Map a tristimulus vector into camera raw RGB at color temperature t."""
    xyz = np.asarray(xyz, dtype=np.float64)
    if xyz.shape != (3,):
        raise DomainError(f"expected XYZ triplet, got shape {xyz.shape}")
    return interpolate_ccm(t, cal, "color_matrix") @ xyz


D65_XY = (0.3127, 0.3290)


def illuminant_raw_to_xyz_cct(
    illum: np.ndarray,
    cal: CameraCalibration,
    tol: float = 1e-6,
    max_iterations: int = 100,
) -> tuple[np.ndarray, float]:
    """Recover the XYZ coordinates and CCT of a camera-raw illuminant color.

    Iterates the chromaticity fixed point: guess a CCT (seeded at D65),
    interpolate the color matrix there, invert it to get XYZ, re-derive the
    CCT from the new chromaticity, and repeat until the xy coordinates move
    less than `tol` per component.  Raises ConvergenceError (carrying the
    last iterate) if the loop does not settle within `max_iterations`, and
    NumericError if an interpolated matrix is effectively singular.
    """
    illum = np.asarray(illum, dtype=np.float64)
    if illum.shape != (3,):
        raise DomainError(f"expected an RGB triplet, got shape {illum.shape}")
    if not np.all(np.isfinite(illum)) or np.any(illum <= 0):
        raise DomainError("illuminant channels must be positive and finite")

    xy = np.array(D65_XY, dtype=np.float64)
    xyz = None
    cct = float("nan")
    for _ in range(max_iterations):
        try:
            # Transient iterates may swing wide of the locus; only the
            # converged point gets the proximity check below.
            cct = _xy_to_cct_unchecked(xy[0], xy[1])
        except DomainError as exc:
            raise ConvergenceError(
                f"iteration hit an invalid chromaticity: {exc}",
                last_xyz=xyz, last_cct=cct) from exc
        m = interpolate_ccm(cct, cal, "color_matrix")
        _check_invertible(m, "interpolated color matrix")
        xyz = np.linalg.solve(m, illum)
        xy_new = np.array(xyz_to_xy(xyz), dtype=np.float64)
        if np.all(np.abs(xy - xy_new) < tol):
            if locus_distance(xy_new[0], xy_new[1]) >= 0.05:
                raise ConvergenceError(
                    "converged to a chromaticity far from the illuminant "
                    f"locus: ({xy_new[0]:.4f}, {xy_new[1]:.4f})",
                    last_xyz=xyz, last_cct=cct)
            return xyz, cct
        xy = xy_new
    raise ConvergenceError(
        f"no fixed point within {max_iterations} iterations",
        last_xyz=xyz, last_cct=cct)
