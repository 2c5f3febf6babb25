"""crosscc: cross-camera computational color constancy.

Estimates scene illuminant color from raw images.  A camera's calibrated
color matrices map a reference illuminant locus into its raw space; that
trajectory is encoded into a compact fingerprint which steers a hypernetwork
that emits per-image convolutional filters over log-chroma histograms.  The
package also ships the imaginary-camera augmentation pipeline, a synthetic
multi-camera dataset generator, an evaluation suite, and a CLI.
"""

__version__ = "0.1.0"

from .colorimetry import (
    CameraCalibration,
    PlanckianSampleSet,
    cct_to_xy,
    illuminant_raw_to_xyz_cct,
    interpolate_ccm,
    interpolation_weight,
    planckian_xyz_samples,
    raw_from_xyz,
    xy_to_cct,
)
from .histogram import (
    CFE_SPEC,
    QUERY_SPEC,
    HistogramSpec,
    RawImage,
    UvHistogram,
    build_histogram,
    edge_image,
    rgb_to_uv,
    uv_to_rgb,
)
from .cfe import (
    CfeEncoderConfig,
    GuidanceIlluminants,
    cfe_histogram,
    encode_fingerprint,
    guidance_illuminants,
    tile_fingerprint,
)
from .estimator import (
    BackboneConfig,
    CccKernel,
    IlluminantEstimate,
    Model,
    angular_error,
    apply_ccc,
    backbone_forward,
    camera_fingerprint,
    estimate_illuminant,
    heatmap_centroid,
    init_model,
    load_model,
    save_model,
)
from .augmentation import (
    IlluminantPool,
    XyzImage,
    fit_illuminant_poly,
    map_illuminant,
    render_to_camera,
    sample_augmented_illuminant,
    synthesize_imaginary,
    to_xyz_pool,
    white_balance,
)
from .dataio import (
    DatasetManifest,
    SyntheticCameraSpec,
    generate_synthetic_dataset,
    load_camera_metadata,
    load_manifest,
    read_pfm,
    write_pfm,
)
from .metrics import ErrorStats, compute_stats, evaluate_manifest, gray_world
from .training import TrainConfig, train
