"""Uplink cell-free massive MIMO SE under channel aging and hardware impairments."""

from .config import SystemConfig, config_from_dict, load_config

__all__ = ["SystemConfig", "config_from_dict", "load_config"]
__version__ = "0.1.0"
