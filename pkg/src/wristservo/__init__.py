"""Eye-in-hand visual servoing simulator for a two-joint prosthetic wrist."""
from .geometry import Pose, Twist, chain_displacements, compose, inverse, pseudo_inverse, velocity_transform
from .wrist import JointState, JointVelocity, WristParams, forward_kinematics, joint_jacobian
from .vision import (
    CameraIntrinsics,
    FeaturePoint,
    PartLabel,
    PartMask,
    SceneObject,
    merge_object_mask,
    render_part_masks,
    select_nearest_to_center,
)
from .servo import (
    Controller,
    ControllerConfig,
    EpisodeResult,
    Handedness,
    interaction_matrix_point,
    naturalness,
    ppibvs_step,
    sibvs_step,
    simulate_episode,
)
from .pipeline import GraspPlan, Phase, PipelineConfig, TriggerEvent, label_to_wrist_target, run_session, step
from .annotation import AnnotationInput, annotate_sequence
from .bench import HemisphereSampler, run_comparison, run_fig3_scenario, sample_hemisphere

__all__ = [
    "Pose", "Twist", "chain_displacements", "compose", "inverse", "pseudo_inverse", "velocity_transform",
    "JointState", "JointVelocity", "WristParams", "forward_kinematics", "joint_jacobian",
    "CameraIntrinsics", "FeaturePoint", "PartLabel", "PartMask", "SceneObject",
    "merge_object_mask", "render_part_masks", "select_nearest_to_center",
    "Controller", "ControllerConfig", "EpisodeResult", "Handedness", "interaction_matrix_point",
    "naturalness", "ppibvs_step", "sibvs_step", "simulate_episode",
    "GraspPlan", "Phase", "PipelineConfig", "TriggerEvent", "label_to_wrist_target", "run_session", "step",
    "AnnotationInput", "annotate_sequence",
    "HemisphereSampler", "run_comparison", "run_fig3_scenario", "sample_hemisphere",
]
__version__ = "0.1.0"
