"""Layered mesh-anchored Gaussian avatars."""

from ._core import (
    CATEGORY_NAMES,
    Camera,
    GaussianSet,
    SkinnedMesh,
    StrataError,
    avatar_fixture,
    build_body_gaussians,
    gradcheck,
    load_camera,
    load_image,
    load_mask,
    load_mesh,
    load_scene,
    make_cylinder,
    psnr,
    recolor_group,
    remove_group,
    render,
    save_image,
    save_mesh,
    save_scene,
    transfer_group,
)

__all__ = [
    "CATEGORY_NAMES",
    "Camera",
    "GaussianSet",
    "SkinnedMesh",
    "StrataError",
    "avatar_fixture",
    "build_body_gaussians",
    "gradcheck",
    "load_camera",
    "load_image",
    "load_mask",
    "load_mesh",
    "load_scene",
    "make_cylinder",
    "psnr",
    "recolor_group",
    "remove_group",
    "render",
    "save_image",
    "save_mesh",
    "save_scene",
    "transfer_group",
]
