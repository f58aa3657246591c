from .config import ConfigError, ModelConfig, config_from_dict, dump_config, load_config
from .data import GroupedDataset, ModelData
from .state import ChainState, Model, NumericalFailure, build_model, initialize
from .sweep import gibbs_sweep, run_chain, run_postprocessing_chain
from .trace import Trace

__all__ = [
    "ChainState", "ConfigError", "GroupedDataset", "Model", "ModelConfig", "ModelData",
    "NumericalFailure", "Trace", "build_model", "config_from_dict", "dump_config",
    "gibbs_sweep", "initialize", "load_config", "run_chain", "run_postprocessing_chain",
]
