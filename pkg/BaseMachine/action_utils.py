"""
Action Functions Module
Builds actions that run nested state machines.
"""

from BaseMachine.logger import get_logger

logger = get_logger(__name__)


class StageFailedError(RuntimeError):
    """A sub-state machine stopped on an error; the original exception is chained."""

    def __init__(self, state_name, cause):
        self.state_name = state_name
        self.cause = cause
        super().__init__(f"sub-state '{state_name}' failed: {type(cause).__name__}: {cause}")


def call_sub_state_machine_action(sub_state_definitions, sub_initial_state, sub_context_cls, save_option='both'):
    """
    Create an action function that calls a sub-state machine

    :param sub_state_definitions: The sub-state machine's state definitions
    :param sub_initial_state: The sub-state machine's initial state
    :param sub_context_cls: The sub-state machine's context class (called with the action kwargs)
    :param save_option: Save option, can be 'both', 'context', 'result', or 'none'
    :return: The action function
    """
    if save_option not in ('both', 'context', 'result', 'none'):
        raise ValueError("Invalid save_option value. Choose from 'context', 'result', 'both' or 'none'.")

    def sub_state_machine_action(machine, **kwargs):
        from BaseMachine.state_machine import StateMachine  # Avoid circular import

        sub_context = sub_context_cls(**kwargs)
        sub_machine = StateMachine(
            context=sub_context,
            state_definitions=sub_state_definitions,
            initial_state=sub_initial_state,
        )
        sub_result = sub_machine.process()
        if sub_machine.failed:
            raise StageFailedError(sub_machine.failed_state, sub_machine.error) from sub_machine.error

        # Save content based on the save_option parameter
        if save_option == 'context':
            machine.analysis_result.append(sub_context)
        elif save_option == 'result':
            machine.analysis_result.append(sub_result)
        elif save_option == 'both':
            machine.analysis_result.append({'context': sub_context, 'result': sub_result})

        return sub_result
    return sub_state_machine_action
