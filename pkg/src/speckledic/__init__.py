"""Synthetic speckle metrology workbench.

Renders boolean-model speckle patterns, deforms them exactly or by
interpolation, builds training datasets with ground-truth flow, matches
image pairs with a subset-based solver, and scores any displacement
estimate with a star-target metrology suite.
"""

from .dataset import (
    DatasetConfig,
    DatasetVersion,
    FlowFormatError,
    build_dataset,
    read_flow,
    write_flow,
)
from .dic import (
    DicConfig,
    DicResult,
    PreshiftError,
    SubsetResult,
    dic_dense,
    dic_with_preshift,
    icgn_subset,
    integer_preshift,
)
from .fields import (
    DisplacementField,
    FieldGenSpec,
    StarSpec,
    random_field,
    star_field,
    zero_field,
)
from .images import GrayImage, load_png, save_png
from .interpolate import Interp
from .metrology import (
    EvaluationROI,
    MetrologyReport,
    PibMode,
    ResolutionOutOfRange,
    aee,
    alpha_indicator,
    attenuation_and_columns,
    displacement_resolution,
    mae_v,
    metrology_report,
    pib_experiment,
    spatial_resolution,
    star_eval_roi,
    strain,
)
from .speckle import (
    DiskSet,
    RadiusDistribution,
    ScreenThresholds,
    SpeckleParams,
    render_speckle,
    sample_disks,
    screen_reference,
    star_speckle_params,
)
from .warping import NoiseModel, RenderError, add_noise, quantize, render_deformed_speckle, warp

__version__ = "0.1.0"

__all__ = [
    "DatasetConfig",
    "DatasetVersion",
    "DicConfig",
    "DicResult",
    "DiskSet",
    "DisplacementField",
    "EvaluationROI",
    "FieldGenSpec",
    "FlowFormatError",
    "GrayImage",
    "Interp",
    "MetrologyReport",
    "NoiseModel",
    "PibMode",
    "PreshiftError",
    "RadiusDistribution",
    "RenderError",
    "ResolutionOutOfRange",
    "ScreenThresholds",
    "SpeckleParams",
    "StarSpec",
    "SubsetResult",
    "aee",
    "add_noise",
    "alpha_indicator",
    "attenuation_and_columns",
    "build_dataset",
    "dic_dense",
    "dic_with_preshift",
    "displacement_resolution",
    "icgn_subset",
    "integer_preshift",
    "load_png",
    "mae_v",
    "metrology_report",
    "pib_experiment",
    "quantize",
    "random_field",
    "read_flow",
    "render_deformed_speckle",
    "render_speckle",
    "sample_disks",
    "save_png",
    "screen_reference",
    "spatial_resolution",
    "star_eval_roi",
    "star_field",
    "star_speckle_params",
    "strain",
    "warp",
    "write_flow",
    "zero_field",
]
