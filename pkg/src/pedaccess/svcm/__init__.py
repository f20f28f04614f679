"""Space-varying coefficient regression with simultaneous inference."""
from .basis import BasisSpec, SpatialBasis, SvcmError
from .fit import INTERCEPT, CoefficientSurface, FitOptions, ModelFit, fit_svcm, refit_shuffled
from .inference import (Band, ModelComparison, ModelRow, ShapeVerdict, SignificanceMap, classify_shape,
                        difference_test, evaluate_models, location_test, significance_map,
                        simultaneous_band)

__all__ = [
    "BasisSpec", "SpatialBasis", "SvcmError", "INTERCEPT", "CoefficientSurface", "FitOptions", "ModelFit",
    "fit_svcm", "refit_shuffled", "Band", "ModelComparison", "ModelRow", "ShapeVerdict", "SignificanceMap",
    "classify_shape", "difference_test", "evaluate_models", "location_test", "significance_map",
    "simultaneous_band",
]
