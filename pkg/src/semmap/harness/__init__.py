from .config import ConfigError, RunConfig, config_from_dict, load_config
from .logio import LogError, LogHeader, ingest_log, iter_log, write_log
from .metrics import BeliefTrace, RunMetrics, compute_metrics, weighted_average
from .pipeline import PipelineError, RunResult, run_pipeline, simulate_frames, simulate_to_log

__all__ = [
    "ConfigError", "RunConfig", "config_from_dict", "load_config",
    "LogError", "LogHeader", "ingest_log", "iter_log", "write_log",
    "BeliefTrace", "RunMetrics", "compute_metrics", "weighted_average",
    "PipelineError", "RunResult", "run_pipeline", "simulate_frames", "simulate_to_log",
]
