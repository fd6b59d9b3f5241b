"""gazelab: desk-scale gaze-estimation experiments on a self-contained
autodiff CNN engine.

Levers under study: first-layer stride, input image resolution and the
multi-region (face + two eyes) architecture, with an analytic
receptive-field calculator, camera-geometry data normalization, a
synthetic sub-pixel dataset and an experiment grid runner.
"""

from .arch import (ArchitectureSpec, LayerSpec, ModelConfig, MultiRegionSpec,
                   build_from_model_config, build_minires, build_multiregion,
                   build_poolformer, list_layers, minires_spec,
                   parameter_count, poolformer_spec)
from .estimator import GazeRegressor
from .geometry import (CameraIntrinsics, GeometryError, HeadPose,
                       NormalizationSpec, angular_error_deg, denormalize_gaze,
                       eye_normalization_spec, face_normalization_spec,
                       normalization_transform, normalize_gaze,
                       pitchyaw_to_vector, vector_to_pitchyaw, warp_image)
from .gradcheck import check_op, finite_diff_check
from .optim import Adam, AdamState, adam_step
from .receptive_field import (ReceptiveFieldProfile, compare_rf,
                              impulse_rf_oracle, measure_rf_boxes, rf_profile)
from .synth import SynthConfig, clean_config, oracle_gaze, synth_render
from .dataset import (Dataset, GazeSample, generate_dataset, iterate_batches,
                      load_dataset, prepare_inputs)
from .tensor import Tape, Tensor, backward
from .training import (TrainConfig, evaluate, lr_schedule, train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "AdamState", "ArchitectureSpec", "CameraIntrinsics", "Dataset",
    "GazeRegressor", "GazeSample", "GeometryError", "HeadPose", "LayerSpec",
    "ModelConfig", "MultiRegionSpec", "NormalizationSpec",
    "ReceptiveFieldProfile", "SynthConfig", "Tape", "Tensor", "TrainConfig",
    "adam_step", "angular_error_deg", "backward", "build_from_model_config",
    "build_minires", "build_multiregion", "build_poolformer", "check_op",
    "clean_config", "compare_rf", "denormalize_gaze", "evaluate",
    "eye_normalization_spec", "face_normalization_spec", "finite_diff_check",
    "generate_dataset", "impulse_rf_oracle", "iterate_batches", "list_layers",
    "load_dataset", "lr_schedule", "measure_rf_boxes", "minires_spec",
    "normalization_transform", "normalize_gaze", "oracle_gaze",
    "parameter_count", "pitchyaw_to_vector", "poolformer_spec",
    "prepare_inputs", "rf_profile", "synth_render", "train",
    "vector_to_pitchyaw", "warp_image",
]
