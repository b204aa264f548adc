"""Algorithm-independent complexity measures for load disaggregation."""
from .complexity import (DEFAULT_SIGMA, OverlapKernel, TimeSeriesComplexity,
                         complexity_of_value, histogram_states, ovl, spectrum,
                         timeseries_complexity)
from .detection import DetectionConfig, detect
from .disaggregator import PFConfig, build_fhmm, disaggregate, score
from .domain import (AggregatedValueSet, ApplianceModel, ApplianceSet, ComplexitySpectrum,
                     DetectedStateSet, DisaggregationResult, GaussianSpec, PowerTrace,
                     ValidationError, validate_appliance_set)
from .enumeration import EnumerationBudget, count_combinations, enumerate_values
from .ingestion import aggregate, load_csv, synthesize

__version__ = "0.1.0"
