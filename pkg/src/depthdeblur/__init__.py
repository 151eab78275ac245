"""Joint camera-motion estimation and deblurring from one blurry image and its depth map."""
from .blur import BlurOperator
from .geometry import induced_flow, pose_at_time, small_rotation, warp
from .metrics import EvalReport, evaluate, flow_error, psnr, ssim
from .pipeline import DeblurResult, build_pyramid, deblur, render_sequence
from .synth import procedural_instance, procedural_scene, sample_motion, synthesize
from .types import (AngleTooLarge, CGBreakdown, DeblurError, DepthMap, DimensionMismatch, EnergyParams,
                    FlowField, ImageTooSmall, Intrinsics, InvalidParameter, NonPositiveDepth, Pose6,
                    SolverOptions, as_image)

__version__ = "0.1.0"
