"""Marker/markerless mode transitions for optical tactile images."""

from tacmode.core import (
    DimensionError,
    PngFormatError,
    Rect,
    TactileError,
    crop,
    load_png,
    save_png,
)
from tacmode.inpaint import InpaintRequest, inpaint, inpaint_fmm, inpaint_harmonic, rectify
from tacmode.markers import (
    ExtractConfig,
    MarkerMatch,
    MarkerSet,
    MotionField,
    extract_markers,
    match_nearest,
    motion_field,
    offset_mask,
)
from tacmode.metrics import mse, motion_errors, nan_rate, psnr, ssim
from tacmode.patches import PatchLayout, merge_patches, plan_patches, slice_patches
from tacmode.slip import SlipConfig, SlipDetector, SlipEvent, calibrate_epsilon, process_stream, slip_condition
from tacmode.synth import SceneSpec, gen_scene, gen_slip_sequence
from tacmode.tacdiff import (
    ClassicalDenoiser,
    ExternalDenoiser,
    NoiseSchedule,
    OracleDenoiser,
    add_noise,
    make_offset_pair,
    reference_loss,
    sample,
    schedule_linear,
)

__version__ = "0.1.0"
