"""Configuration, checkpoints, metrics and plots for training runs."""
from .checkpoint import (
    BadMagicError,
    Checkpoint,
    CheckpointError,
    CorruptError,
    TruncatedError,
    VersionMismatchError,
    capture,
    load_checkpoint,
    restore,
    save_checkpoint,
)
from .config import (
    ConfigError,
    ConfigReadError,
    ConfigTypeError,
    ConfigValueError,
    RunConfig,
    UnknownKeyError,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)
from .metrics import metrics_append, read_metrics
from .plots import emit_plot, policy_quiver_data, quiver_grid
