"""
sdf-param - neural parameterization of implicit surfaces.

Maps the zero level set of a signed distance field onto a simple parametric
domain (a sphere or a polycube) with a learned forward deformation and its
inverse, decomposes appearance into material and shading, and supports
texture editing, shading transfer and domain-swap edits on the result.

Example:
    >>> from sdf_param import SphereSdf, build_param_model, marching_cubes
    >>> bundle = build_param_model(SphereSdf((0, 0, 0), 0.5), ["sphere"])
    >>> mesh = marching_cubes(bundle.deform.composed_field("sphere"), 64)
    >>> print(mesh.euler_characteristic)
"""

__version__ = "0.3.0"
__status__ = "Beta"
__description__ = "Neural parameterization of implicit surfaces onto sphere and polycube domains"

from .checkpoint import CHECKPOINT_FORMAT_VERSION
from .deformation import DeformConfig, DeformModel
from .domain_fit import DomainSpec, fit_domain
from .mesh_ops import TriangleMesh, distortion_report, map_mesh, marching_cubes
from .model import ParamModel, build_param_model, load_model, save_model, swap_domain
from .rendering import AppearanceModel, Camera, RenderSettings, render_image
from .sdf_fields import PolycubeSdf, SphereSdf, field_from_descriptor
from .texture import TextureAtlas, bake_texture, transfer_texture
from .training import train_parameterization, two_phase_train

__all__ = [
    "CHECKPOINT_FORMAT_VERSION",
    "AppearanceModel",
    "Camera",
    "DeformConfig",
    "DeformModel",
    "DomainSpec",
    "ParamModel",
    "PolycubeSdf",
    "RenderSettings",
    "SphereSdf",
    "TextureAtlas",
    "TriangleMesh",
    "bake_texture",
    "build_param_model",
    "distortion_report",
    "field_from_descriptor",
    "fit_domain",
    "load_model",
    "map_mesh",
    "marching_cubes",
    "render_image",
    "save_model",
    "swap_domain",
    "train_parameterization",
    "transfer_texture",
    "two_phase_train",
]
