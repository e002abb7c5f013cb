# src/config.py

"""
Configuration settings for Pledgepoint.
"""

import os

class Config:
    """
    Configuration for the Pledgepoint toolkit.
    Numerical tolerances, oracle limits and report settings shared by every module.
    """
    def __init__(self):

        # Define paths to important folders
        self.OUTPUT_DIR = "./output"
        self.TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "templates")

        # Domain conventions
        self.SPONSOR_ID = 0  # Reserved id of the sponsor (referral forest root)

        # Numerical tolerances
        self.UTILITY_TOLERANCE = 1e-9  # A deviation must improve utility by more than this to count
        self.FUNDING_TOLERANCE = 1e-9  # Contributions this close to the remaining target close the project
        self.ROUNDTRIP_TOLERANCE = 1e-9  # C0 / C0^-1 composition tolerance
        self.MONOTONE_TOLERANCE = 1e-12  # Slack for gradient and concavity checks on grids
        self.FINITE_DIFF_STEP = 1e-6  # Step for central finite differences
        self.SUPREMUM_TOLERANCE = 1e-2  # Relative gap allowed between cap and s(R) far out on the axis
        self.SATURATION_TOLERANCE = 1e-9  # Relative gap to the cap below which an RBF grid point counts as saturated

        # Oracle limits
        self.ORACLE_MAX_PROFILES = 2_000_000  # Refuse enumerations above this profile count
        self.ORACLE_MAX_AGENTS = 6  # Exhaustive search is limited to small games

        # Simulation parameters
        self.DEFAULT_SEED = 0  # Seed used when neither the CLI nor the experiment gives one
        self.DEFAULT_TIME_GRID = 1.0  # Step of the discretized time axis
        self.SWEEP_N_JOBS = 1  # joblib workers for sweeps (1 = sequential)

        # Reporting configuration
        self.REPORT_DECIMALS = 6  # Decimals printed for currency and securities
        self.EXPERIMENT_VERSION = "1"  # Accepted experiment file version tag

        # Console behaviour
        self.VERBOSE_LOGGING = False  # Print diagnostic messages
        self.QUIET = False  # Silence informational messages

config = Config()
