"""Blind subspace channel estimation for MIMO-OFDM links."""

__version__ = "0.1.0"

from .sysmodel import ConfigError, SystemConfig, constellation  # noqa: E402
from .channel import ChannelSet, draw_channel  # noqa: E402
from .estimator import blind_estimate, exact_covariance  # noqa: E402
from .rxchain import SweepGrid, TrialRecord, run_sweep, run_trial  # noqa: E402

__all__ = [
    "ChannelSet", "ConfigError", "SweepGrid", "SystemConfig", "TrialRecord",
    "blind_estimate", "constellation", "draw_channel", "exact_covariance",
    "run_sweep", "run_trial",
]
