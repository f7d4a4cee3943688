"""Coverage+novelty view selection, teacher-quality gating and a navigation proxy."""

from .geometry import (
    CoverageParams,
    DepthImage,
    Intrinsics,
    Pose,
    Scene,
    VisibilitySet,
    coverage_value,
    pose_visibility,
    render_depth,
    visibility_set,
)
from .sampling import CandidatePool, SamplerParams, build_candidate_pool
from .selection import SelectionParams, SelectionResult, greedy_select, select

__version__ = "0.1.0"
