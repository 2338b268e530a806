"""Simulation and analysis of photon statistics from (double) quantum emitters."""
from .models import *  # noqa: F401,F403

__version__ = "0.1.0"
