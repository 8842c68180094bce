"""Differentiable CT-to-radiograph projection with paired label masks."""

from .camera import Camera, Pose, ProximityParams, Ray, RayBundle, generate_rays, ray_aabb, sample_camera, sample_pose
from .gradients import PixelGradient, grad_check, grad_pixel
from .losses import LossValue, adv_loss_d, adv_loss_g, l_reg, total_objective
from .pipeline import DatasetManifest, RenderConfig, VolumeSource, generate_dataset
from .projector import MarchResult, MaskImage, Mode, Radiograph, march_ray, project_labels, render
from .radiance import RadianceVolume, TransferFunction, eval_tf, map_fields
from .siddon import VoxelPath, siddon_project, siddon_trace
from .volume import (
    Aabb,
    CtVolume,
    Grid,
    NormalizedVolume,
    SegVolume,
    index_to_world,
    load_volume,
    normalize_hu,
    sample_trilinear,
    world_to_index,
)

__all__ = [
    "Aabb", "Camera", "CtVolume", "DatasetManifest", "Grid", "LossValue", "MarchResult", "MaskImage",
    "Mode", "NormalizedVolume", "PixelGradient", "Pose", "ProximityParams", "RadianceVolume", "Radiograph",
    "Ray", "RayBundle", "RenderConfig", "SegVolume", "TransferFunction", "VolumeSource", "VoxelPath",
    "adv_loss_d", "adv_loss_g", "eval_tf", "generate_dataset", "generate_rays", "grad_check", "grad_pixel",
    "index_to_world", "l_reg", "load_volume", "map_fields", "march_ray", "normalize_hu", "project_labels",
    "ray_aabb", "render", "sample_camera", "sample_pose", "sample_trilinear", "siddon_project",
    "siddon_trace", "total_objective", "world_to_index",
]
