"""Piecewise-planar refinement of inverse depth maps with joint normal
estimation, driven by a guide-image KNN graph and a first-order solver."""

from .energy import (MIXED_L12, NLTGV, ProblemInstance, State, data_term,
                     gradient, nltgv_energy, normal_smoothness_term,
                     planar_term, total_energy)
from .geometry import (CameraIntrinsics, ImagePlaneParam, InverseDepthMap,
                       ScenePlane, disparity_to_inverse_depth,
                       inverse_depth_to_disparity, normal_from_u,
                       normals_from_depth_gradient, normals_from_slopes,
                       plane_inverse_depth, scene_plane_inverse_depth,
                       u_from_normal)
from .graph import GraphParams, GuideImage, PixelGraph, build_graph, edge_weight
from .metrics import MetricReport, binarize_confidence, evaluate
from .solver import (DEFAULT_PRESET, PRESETS, AdamConfig, PyramidConfig,
                     RefineResult, adam_minimize, downsample, refine,
                     upsample_and_scale)
from .synthetic import SCENES, SceneSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "MIXED_L12", "NLTGV", "ProblemInstance", "State", "data_term", "gradient",
    "nltgv_energy", "normal_smoothness_term", "planar_term", "total_energy",
    "CameraIntrinsics", "ImagePlaneParam", "InverseDepthMap", "ScenePlane",
    "disparity_to_inverse_depth", "inverse_depth_to_disparity", "normal_from_u",
    "normals_from_depth_gradient", "normals_from_slopes", "plane_inverse_depth",
    "scene_plane_inverse_depth", "u_from_normal",
    "GraphParams", "GuideImage", "PixelGraph", "build_graph", "edge_weight",
    "MetricReport", "binarize_confidence", "evaluate",
    "DEFAULT_PRESET", "PRESETS", "AdamConfig", "PyramidConfig", "RefineResult",
    "adam_minimize", "downsample", "refine", "upsample_and_scale",
    "SCENES", "SceneSpec", "generate_synthetic",
]
