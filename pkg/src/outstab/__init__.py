"""Output-stabilizability analysis for reaction-diffusion systems with zone devices."""

from outstab.spectral_core import (
    Domain,
    EigenCluster,
    EigenFunctionDescriptor,
    cluster_eigenvalues,
    eigenfunction_eval,
    enumerate_clusters,
    raw_eigenvalues,
    unstable_cluster_set,
)
from outstab.devices import Device, Profile, QuadratureSettings, Zone
from outstab.mode_analysis import (
    AnalysisSettings,
    ModeAnalysis,
    ModeMatrices,
    StabilizabilityReport,
    analyze_system,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisSettings",
    "Device",
    "Domain",
    "EigenCluster",
    "EigenFunctionDescriptor",
    "ModeAnalysis",
    "ModeMatrices",
    "Profile",
    "QuadratureSettings",
    "StabilizabilityReport",
    "Zone",
    "analyze_system",
    "cluster_eigenvalues",
    "eigenfunction_eval",
    "enumerate_clusters",
    "raw_eigenvalues",
    "unstable_cluster_set",
    "__version__",
]
