"""
Configuration for the honeycomb Dirac toolkit
"""
import os
from dataclasses import dataclass
from typing import Any, Dict

from dotenv import load_dotenv

load_dotenv()


# Environment configuration
class Config:
    """Application configuration"""
    OUTPUT_DIR = os.getenv("HONEYCOMB_OUTPUT_DIR", "./output")
    LOG_LEVEL = os.getenv("HONEYCOMB_LOG_LEVEL", "INFO").upper()

    # Plane-wave discretization
    DEFAULT_TRUNCATION = int(os.getenv("HONEYCOMB_TRUNCATION", 10))  # M, dense solve
    QUADRATURE_GRID = int(os.getenv("HONEYCOMB_QUADRATURE_GRID", 64))  # N x N cell samples
    INDEX_SHAPE = os.getenv("HONEYCOMB_INDEX_SHAPE", "disk")  # disk is rotation-closed

    # Spectral thresholds
    ZERO_MODE_RTOL = 1e-6  # |omega| below this * max|omega| is the gradient kernel
    ZERO_MODE_AMBIGUITY_RTOL = 1e-4  # band above the kernel filter reported as ambiguous
    DEGENERACY_RTOL = 1e-6
    SIGMA_DOMINANCE = 0.99

    # Weight certification
    CERTIFY_TOLERANCE = float(os.getenv("HONEYCOMB_CERTIFY_TOLERANCE", 1e-10))
    CERTIFY_GRID = int(os.getenv("HONEYCOMB_CERTIFY_GRID", 64))

    # Dirac-point coefficient checks
    Q_SYMMETRY_TOLERANCE = 1e-8
    BETA_TOLERANCE = 1e-10
    PT_PARTNER_TOLERANCE = 1e-8

    # Maxwell packets
    PACKET_DECAY_TOLERANCE = float(os.getenv("HONEYCOMB_PACKET_DECAY_TOLERANCE", 1e-6))  # boundary |beta| / max|beta|

    # R2 Configuration (optional - artifact upload)
    R2_ENABLED = os.getenv("R2_ENABLED", "false").lower() == "true"
    R2_ACCOUNT_ID = os.getenv("R2_ACCOUNT_ID", "")
    R2_ACCESS_KEY_ID = os.getenv("R2_ACCESS_KEY_ID", "")
    R2_SECRET_ACCESS_KEY = os.getenv("R2_SECRET_ACCESS_KEY", "")
    R2_BUCKET_NAME = os.getenv("R2_BUCKET_NAME", "")
    R2_CUSTOM_DOMAIN = os.getenv("R2_CUSTOM_DOMAIN", "")
    R2_PREFIX = os.getenv("R2_PREFIX", "honeycomb")


@dataclass
class NewtonSettings:
    """Newton-CG controls for stationary modes"""
    tolerance: float = 1e-10
    max_iterations: int = 200
    cg_tolerance: float = 1e-2
    cg_max_iterations: int = 2000
    preconditioner_shift: float = 2.0
    armijo: float = 1e-4
    min_step: float = 1.0 / 1024

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary"""
        return {
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "cg_tolerance": self.cg_tolerance,
            "cg_max_iterations": self.cg_max_iterations,
            "preconditioner_shift": self.preconditioner_shift,
            "armijo": self.armijo,
            "min_step": self.min_step,
        }


def get_output_dir(override: str = None) -> str:
    """Resolve and create the output directory."""
    path = override or Config.OUTPUT_DIR
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        print(f"Error creating output directory {path}: {e}")
        path = "./output"
        os.makedirs(path, exist_ok=True)
    return path
