"""Byzantine-tolerant causal ordering: protocols, a deterministic network simulator and trace checkers."""

from .core import (
    AdversaryScript,
    ConfigError,
    PairSeq,
    ScenarioConfig,
    SendRequest,
    load_config,
    validate_config,
)
from .oracle import Verdict, build_bhb, build_hb, evaluate
from .scenarios import PRESETS, run_scenario, simulate
from .simnet import Engine, Trace

__all__ = [
    "AdversaryScript", "ConfigError", "Engine", "PRESETS", "PairSeq", "ScenarioConfig",
    "SendRequest", "Trace", "Verdict", "build_bhb", "build_hb", "evaluate", "load_config",
    "run_scenario", "simulate", "validate_config",
]
