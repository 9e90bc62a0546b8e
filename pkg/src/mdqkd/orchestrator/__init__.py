"""Protocol driver, adversaries, transports and analyses built on the core modules."""
from mdqkd.orchestrator.config import (HONEST, AdversarySpec, ScenarioConfig, desk_config,
                                       format_config, load_config, parse_config)
from mdqkd.orchestrator.protocol import OK, RunResult, replay, run_protocol
from mdqkd.orchestrator.sifting import sift

__all__ = ["HONEST", "OK", "AdversarySpec", "RunResult", "ScenarioConfig", "desk_config",
           "format_config", "load_config", "parse_config", "replay", "run_protocol", "sift"]
