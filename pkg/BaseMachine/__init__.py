"""
BaseMachine package
Core state machine, sub-machine actions, configuration loading and logging.
"""

# Core components
from .state_machine import StateMachine, BaseState, ExitState
from .config_loader import ConfigError, load_flat_config, parse_flat_config
from .event_log import StageEventLog

# Action utilities
from .action_utils import StageFailedError, call_sub_state_machine_action

__all__ = [
    # Core
    'StateMachine',
    'BaseState',
    'ExitState',
    'ConfigError',
    'load_flat_config',
    'parse_flat_config',
    'StageEventLog',
    # Actions
    'StageFailedError',
    'call_sub_state_machine_action',
]
