"""Observer-based adaptive task-space consensus for networked robot arms."""
from .config import ScenarioConfig, load
from .sim import Simulator, run_scenario

__version__ = "0.1.0"
__all__ = ["ScenarioConfig", "Simulator", "load", "run_scenario"]
