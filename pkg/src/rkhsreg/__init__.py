"""Rigid point cloud registration by gradient ascent of a kernel inner product."""

from .errors import (
    ConfigError,
    EmptyReportError,
    InvalidArgumentError,
    NoOverlapError,
    ParseError,
    SchemaMismatchError,
)
from .innerprod import alignment_report, build_pairs, exact_cosine, gradient, indicator, inner_product
from .kernels import ChannelKernel, KernelParams
from .pointcloud import GEOMETRIC, Channel, FeatureSchema, PointCloud, transform_cloud
from .registration import RegistrationConfig, RegistrationResult, register, register_sequence
from .se3 import Isometry, Twist

__all__ = [
    "Channel", "ChannelKernel", "ConfigError", "EmptyReportError", "FeatureSchema", "GEOMETRIC",
    "InvalidArgumentError", "Isometry", "KernelParams", "NoOverlapError", "ParseError", "PointCloud",
    "RegistrationConfig", "RegistrationResult", "SchemaMismatchError", "Twist", "alignment_report",
    "build_pairs", "exact_cosine", "gradient", "indicator", "inner_product", "register",
    "register_sequence", "transform_cloud",
]
