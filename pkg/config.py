import os
from dataclasses import dataclass, fields, replace

from dotenv import load_dotenv

load_dotenv()


class Config:
    # Logging / Runtime Configuration
    LOG_LEVEL = os.getenv("GIBBS_LOG_LEVEL", "INFO")
    MAX_WORKERS = int(os.getenv("GIBBS_MAX_WORKERS", 4))
    DEFAULT_SEED = int(os.getenv("GIBBS_DEFAULT_SEED", 42))
    SCHEMA_VERSION = "1"

    # Numerical Tolerances
    NORMALIZATION_TOL = float(os.getenv("GIBBS_NORMALIZATION_TOL", 1e-12))
    ALGEBRA_TOL = float(os.getenv("GIBBS_ALGEBRA_TOL", 1e-10))
    SPECTRAL_TOL = float(os.getenv("GIBBS_SPECTRAL_TOL", 1e-8))
    GAP_THRESHOLD = float(os.getenv("GIBBS_GAP_THRESHOLD", 1e-8))
    ZERO_EIGENVALUE_TOL = float(os.getenv("GIBBS_ZERO_EIGENVALUE_TOL", 1e-6))
    NORM_SLACK = float(os.getenv("GIBBS_NORM_SLACK", 1e-9))
    POWER_RATE_TOL = 0.05

    # Suite Configuration
    DEFAULT_WEIGHT_SAMPLES = int(os.getenv("GIBBS_WEIGHT_SAMPLES", 8))
    MAX_ENUMERATED_STEPS = 6
    POWER_RATE_STEPS = 50
    RANDOM_TARGET_COUNT = int(os.getenv("GIBBS_RANDOM_TARGET_COUNT", 100))
    NORM_LEMMA_INSTANCES = 50

    # Hierarchical Example Configuration
    DEFAULT_Y = float(os.getenv("GIBBS_DEFAULT_Y", 0.0))
    TRANSLATION_Y_VALUES = (-3.0, 0.0, 7.0)
    REJECTION_MAX_ITERATIONS = 1_000_000
    REJECTION_WINDOW = 8.0
    QUADRATURE_ABS_TOL = 1e-10
    QUADRATURE_WINDOW_SCALES = 50
    QUADRATURE_LIMIT = 200
    DENSITY_MASS_TOL = 1e-6
    DRIFT_SLACK = 1e-6
    MINORIZATION_SLACK = 1e-12
    SMALL_SET_INFLATION = 1.05
    KS_ALPHA = 1e-3

    # Pre-registered Ergodicity Contrast (fixed before any run)
    CONTRAST_SEED = 42
    CONTRAST_STEPS = 1_000_000
    CONTRAST_MIN_STEPS = 100_000
    CONTRAST_MAX_LAG = 50
    CONTRAST_MIN_FIT_LAGS = 3
    CONTRAST_NOISE_FLOOR_FACTOR = 4.0
    CONTRAST_TAIL_LAGS = 10
    CONTRAST_BLOCK_A_MAX_TAIL_ACF = 0.01
    CONTRAST_BLOCK_B_MIN_TAIL_ACF = 0.1


@dataclass(frozen=True)
class Tolerances:
    """Per-run snapshot of the overridable tolerances"""
    normalization: float = Config.NORMALIZATION_TOL
    algebra: float = Config.ALGEBRA_TOL
    spectral: float = Config.SPECTRAL_TOL
    gap: float = Config.GAP_THRESHOLD
    zero_eigenvalue: float = Config.ZERO_EIGENVALUE_TOL
    norm_slack: float = Config.NORM_SLACK

    @classmethod
    def from_overrides(cls, overrides=None):
        """Build tolerances from a {name: value} map; unknown names are rejected"""
        base = cls()
        if not overrides:
            return base
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise KeyError(f"Unknown tolerance name(s): {', '.join(unknown)}")
        return replace(base, **{name: float(value) for name, value in overrides.items()})

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOLERANCES = Tolerances()
