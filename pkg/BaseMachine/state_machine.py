# state_machine.py

import traceback
from typing import Any, Callable, Dict, Optional, Tuple, Union

from BaseMachine.logger import get_logger

logger = get_logger(__name__)

# What a next_state_func may return: a state name, or (state name, kwargs for that state's action)
Transition = Union[str, Tuple[str, Dict[str, Any]]]


class BaseState:
    def __init__(
        self,
        name: str,
        action: Callable[..., Any],
        next_state_func: Optional[Callable[[Any, 'StateMachine'], Transition]] = None,
    ):
        self.name = name
        self.action = action
        self.next_state_func = next_state_func

    def process(self, machine: 'StateMachine', **kwargs):
        """Run the action, then ask next_state_func where to go."""
        result = self.action(machine, **kwargs)
        return self.next_state_func(result, machine), result


class ExitState(BaseState):
    def __init__(self, action: Optional[Callable[..., Any]] = None):
        super().__init__(name="Exit", action=action or (lambda machine: None))

    def process(self, machine, **kwargs):
        return None, self.action(machine)


def _split_transition(transition: Transition) -> Tuple[str, Dict[str, Any]]:
    if isinstance(transition, str):
        return transition, {}
    if isinstance(transition, tuple) and transition and isinstance(transition[0], str):
        return transition[0], (transition[1] if len(transition) > 1 else {})
    raise ValueError("next_state_func must return a string or a tuple (state_name, args_dict)")


class StateMachine:
    """
    Runs actions state by state until Exit.

    An action exception stops the machine; the exception and the failing
    state stay on the machine (error, failed_state) for the caller.
    """

    def __init__(self, context, state_definitions: Dict[str, Dict], initial_state: str):
        self.context = context
        self.analysis_result = []
        self.error: Optional[BaseException] = None
        self.failed_state: Optional[str] = None

        self.states = {name: self._build_state(name, definition) for name, definition in state_definitions.items()}
        if initial_state not in self.states:
            raise ValueError(f"Initial state '{initial_state}' is not defined in state_definitions.")
        self.state = self.states[initial_state]

    @staticmethod
    def _build_state(name, definition) -> BaseState:
        if name == "Exit":
            return ExitState(definition.get('action'))
        return BaseState(name=name, action=definition['action'], next_state_func=definition.get('next_state_func'))

    @property
    def failed(self) -> bool:
        return self.error is not None

    def process(self):
        """Run to Exit and return its result, or the last action's result when Exit returns None."""
        previous_result = None
        pending_args: Dict[str, Any] = {}
        while True:
            try:
                if isinstance(self.state, ExitState):
                    _, exit_result = self.state.process(self)
                    return previous_result if exit_result is None else exit_result

                transition, result = self.state.process(self, **pending_args)
                next_name, pending_args = _split_transition(transition)
                if next_name not in self.states:
                    raise ValueError(f"State '{self.state.name}' moved to undefined state '{next_name}'")
                self.state = self.states[next_name]
                previous_result = result
            except Exception as e:
                self.error = e
                self.failed_state = self.state.name
                logger.error(f"Error in state '{self.failed_state}': {type(e).__name__}: {e}")
                logger.debug(''.join(traceback.format_exception(None, e, e.__traceback__)))
                return None

    def results(self):
        return self.analysis_result
