"""Discrete-event simulator of 802.16e (WiMAX) MAC QoS scheduling with
E-model voice quality scoring."""

from .config import ScenarioConfig, load_config, load_preset, parse_config
from .emodel import compute_id, compute_ie, compute_r, r_to_mos, score_window
from .runner import run_scenario

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "load_config", "load_preset", "parse_config", "compute_id",
           "compute_ie", "compute_r", "r_to_mos", "score_window", "run_scenario"]
