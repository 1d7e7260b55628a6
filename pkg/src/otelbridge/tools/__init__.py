from .config import BridgeConfig
from .emitter import EmitReport, ScenarioConfig, emit_synthetic, generate_records, generate_traces
from .replay import ReplayReport, read_log, replay_log, write_log
from .transformer import Transformer, run_transformer

__all__ = [
    "BridgeConfig",
    "EmitReport",
    "ReplayReport",
    "ScenarioConfig",
    "Transformer",
    "emit_synthetic",
    "generate_records",
    "generate_traces",
    "read_log",
    "replay_log",
    "run_transformer",
    "write_log",
]
