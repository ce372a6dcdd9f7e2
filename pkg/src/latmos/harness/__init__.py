from .config import DoorKeyConfig, ExperimentConfig, SymbolicConfig, load_config, save_config
from .metrics import AccuracyReport, compute_accuracy
