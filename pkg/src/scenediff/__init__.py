"""Large-scene diffusion orchestration over keypoint-box layouts."""

from .attention import (
    ModulationParams,
    SegmentSpec,
    base_attention,
    build_condition_map,
    build_range_maps,
    build_size_map,
    lambda_schedule,
    modulate,
)
from .dtxl import read_dtxl, write_dtxl
from .engine import (
    AnalyticGaussianBackend,
    BackendCapabilities,
    DenoiserBackend,
    MockBackend,
    NoiseSchedule,
    RngStream,
    ZeroBackend,
    analytic_gaussian_epsilon,
    denoise_step,
    forward_noise,
    reverse_run,
    step_from_normalized,
    vcjd,
    vcjd_step,
)
from .errors import (
    BackendError,
    CoverageError,
    DimMismatch,
    GeometryError,
    InfeasibleError,
    OverlapError,
    SceneDiffError,
    SchemaError,
    StepOutOfRange,
    WindowTooLarge,
)
from .geometry import (
    ConditionSet,
    DensePair,
    RasterConfig,
    ViewCondition,
    Window,
    WindowPlan,
    crop,
    crop_condition,
    embed,
    plan_windows,
    rasterize_conditions,
    rasterize_conditions_at,
    stitch,
)
from .layout import (
    BoundingBox,
    GroupLayout,
    InstanceLayout,
    Keypoints,
    LayoutCounts,
    MatchReport,
    Pairing,
    PromptBundle,
    SceneLayout,
    assign_instances_to_groups,
    build_instruction_prompts,
    category_counts,
    inclusion_check,
    iou,
    match_captions_to_poses,
    numerical_matching,
    parse_grounding_reply,
    parse_scene_layout,
    serialize_scene_layout,
    spatial_matching,
    synthesize_layout_procedural,
)
from .pyramid import PyramidConfig, interpolate, pixel_perturb, pppi
from .wire import ExternalBackend

__version__ = "0.1.0"
