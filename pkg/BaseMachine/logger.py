"""
Unified Logging System for the workflow framework.
Provides consistent logging configuration across all modules.
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from colorama import Fore, Style, init

# Initialize colorama for cross-platform colored output
init(autoreset=True)

# Every module logger hangs under one of these (see get_logger)
ROOT_LOGGERS = ('workflow', 'BM', 'SW')


class ColoredFormatter(logging.Formatter):
    """Custom formatter for colored console output."""

    COLORS = {
        'DEBUG': Fore.BLUE,
        'INFO': Fore.GREEN,
        'WARNING': Fore.YELLOW,
        'ERROR': Fore.RED,
        'CRITICAL': Fore.MAGENTA + Style.BRIGHT,
    }

    def format(self, record):
        """Format log record with color coding."""
        # Work on a copy so file handlers still see the plain level name
        record = logging.makeLogRecord(record.__dict__)
        level_color = self.COLORS.get(record.levelname, '')
        record.levelname = f"{level_color}{record.levelname}{Style.RESET_ALL}"
        return super().format(record)


class WorkflowLogger:
    """
    Unified logger for the workflow framework.
    Console output is configured once; file output is added on request.
    """

    _instance = None
    _initialized = False
    _file_handler = None

    def __new__(cls):
        """Singleton pattern to ensure only one logger configuration."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._setup_console()
        WorkflowLogger._initialized = True

    def _setup_console(self):
        """Install the colored console handler on the framework loggers."""
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(logging.INFO)
        console_format = (
            f"{Fore.WHITE}[%(asctime)s]{Style.RESET_ALL} "
            f"{Fore.CYAN}[%(name)s]{Style.RESET_ALL} "
            f"[%(levelname)s] "
            f"%(message)s"
        )
        console_handler.setFormatter(ColoredFormatter(console_format, datefmt='%H:%M:%S'))

        for name in ROOT_LOGGERS:
            framework_logger = logging.getLogger(name)
            framework_logger.setLevel(logging.DEBUG)
            framework_logger.propagate = False
            framework_logger.addHandler(console_handler)

    def setup_file_logging(self, log_dir):
        """Add a plain-text DEBUG file handler under log_dir (replaces an earlier one)."""
        try:
            log_path = Path(log_dir)
            log_path.mkdir(parents=True, exist_ok=True)
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
            log_file = log_path / f'workflow_{timestamp}.log'

            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(
                '[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            ))

            for name in ROOT_LOGGERS:
                framework_logger = logging.getLogger(name)
                if WorkflowLogger._file_handler is not None:
                    framework_logger.removeHandler(WorkflowLogger._file_handler)
                framework_logger.addHandler(file_handler)
            if WorkflowLogger._file_handler is not None:
                WorkflowLogger._file_handler.close()
            WorkflowLogger._file_handler = file_handler
            return log_file
        except OSError as e:
            # If file logging fails, continue with console logging only
            logging.getLogger('workflow').warning(f"Could not setup file logging: {e}")
            return None

    @staticmethod
    def get_logger(name=None):
        """
        Get a logger instance for a specific module.

        Args:
            name: Logger name (usually __name__)

        Returns:
            Configured logger instance
        """
        WorkflowLogger()

        if name is None:
            name = 'workflow'

        # Shorten package prefixes; everything lands under a configured root
        if name.startswith('SaliencyWorkflow.'):
            name = name.replace('SaliencyWorkflow.', 'SW.', 1)
        elif name.startswith('BaseMachine.'):
            name = name.replace('BaseMachine.', 'BM.', 1)
        elif name.split('.', 1)[0] not in ROOT_LOGGERS:
            name = f'workflow.{name}'

        return logging.getLogger(name)

    @staticmethod
    def log_step_start(step_name, description=""):
        """Banner for a stage about to run."""
        logger = WorkflowLogger.get_logger('workflow')
        rule = "-" * 60
        logger.info(f"{Fore.CYAN}{rule}")
        logger.info(f"{Fore.CYAN}>> {step_name}" + (f" ({description})" if description else ""))
        logger.info(f"{Fore.CYAN}{rule}{Style.RESET_ALL}")

    @staticmethod
    def log_step_complete(step_name, note=None):
        logger = WorkflowLogger.get_logger('workflow')
        suffix = f": {note}" if note else ""
        logger.info(f"{Fore.GREEN}<< {step_name} done{suffix}{Style.RESET_ALL}")

    @staticmethod
    def log_step_error(step_name, error):
        logger = WorkflowLogger.get_logger('workflow')
        logger.error(f"{Fore.RED}<< {step_name} failed: {type(error).__name__}: {error}{Style.RESET_ALL}")

    @staticmethod
    def log_workflow_summary(total_steps, completed_steps, errors=None):
        """One block at the end of a run: selected stages, finished stages, failures."""
        logger = WorkflowLogger.get_logger('workflow')
        rule = "=" * 60
        logger.info(f"{Fore.MAGENTA}{rule}")
        logger.info(f"{Fore.MAGENTA}Run summary: {completed_steps}/{total_steps} stage(s) finished{Style.RESET_ALL}")
        for error in errors or []:
            logger.error(f"{Fore.RED}  failed: {error}{Style.RESET_ALL}")
        logger.info(f"{Fore.MAGENTA}{rule}{Style.RESET_ALL}")


def get_logger(name=None):
    """Get a logger instance - convenience function."""
    return WorkflowLogger.get_logger(name)


def setup_logging(log_dir=None):
    """Initialize the unified logging system; optionally also log to files under log_dir."""
    workflow_logger = WorkflowLogger()
    if log_dir is not None:
        return workflow_logger.setup_file_logging(log_dir)
    return None
