"""Fisher information and optimal linear interferometry for localizing weak
incoherent point emitters observed through an array of light collectors."""

from .estimation import (
    DetectionRecord,
    EstimationResult,
    NonIdentifiableError,
    crb_sweep,
    default_search_interval,
    mle_estimate,
    sample_detections,
)
from .fisher import (
    ConsistencyReport,
    FisherReport,
    GeneratorMoments,
    NumericalError,
    ParaxialTarget,
    cfi,
    classical_fidelity,
    detection_probabilities,
    generator_moments,
    information_report,
    optimal_axial_phase,
    overlap_matrix,
    paraxial_qfi_matrix,
    qfi,
    qfi_matrix_consistency,
    quantum_fidelity,
)
from .geometry import (
    Collector,
    DegenerateGeometryError,
    GeneralizedCoordinate,
    Mode,
    Scenario,
    ScenarioError,
    SourcePoint,
    amplitude,
    build_amplitude_matrix,
    disc_collector_grid,
    displace,
    load_scenario,
    named_direction,
    save_scenario,
    scenario_digest,
)
from .interferometer import (
    Interferometer,
    Provenance,
    SaturationReport,
    SvdAlignment,
    SynthesisResult,
    beam_splitter_with_phase,
    builtin_interferometer,
    identity_interferometer,
    interferometer_from_json,
    interferometer_to_json,
    natural_displacement_scale,
    qft_interferometer,
    svd_alignment,
    synthesize_optimal_interferometer,
    verify_saturation,
)
from .scenarios import bundled_scenario_path, bundled_scenarios

__version__ = "0.1.0"

__all__ = [
    "Collector",
    "ConsistencyReport",
    "DegenerateGeometryError",
    "DetectionRecord",
    "EstimationResult",
    "FisherReport",
    "GeneralizedCoordinate",
    "GeneratorMoments",
    "Interferometer",
    "Mode",
    "NonIdentifiableError",
    "NumericalError",
    "ParaxialTarget",
    "Provenance",
    "SaturationReport",
    "Scenario",
    "ScenarioError",
    "SourcePoint",
    "SvdAlignment",
    "SynthesisResult",
    "amplitude",
    "beam_splitter_with_phase",
    "build_amplitude_matrix",
    "builtin_interferometer",
    "bundled_scenario_path",
    "bundled_scenarios",
    "cfi",
    "classical_fidelity",
    "crb_sweep",
    "default_search_interval",
    "detection_probabilities",
    "disc_collector_grid",
    "displace",
    "generator_moments",
    "identity_interferometer",
    "information_report",
    "interferometer_from_json",
    "interferometer_to_json",
    "load_scenario",
    "mle_estimate",
    "named_direction",
    "natural_displacement_scale",
    "optimal_axial_phase",
    "overlap_matrix",
    "paraxial_qfi_matrix",
    "qfi",
    "qfi_matrix_consistency",
    "qft_interferometer",
    "quantum_fidelity",
    "sample_detections",
    "save_scenario",
    "scenario_digest",
    "svd_alignment",
    "synthesize_optimal_interferometer",
    "verify_saturation",
]
