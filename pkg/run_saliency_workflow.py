#!/usr/bin/env python3
"""
Main entry point for running the Saliency Workflow.

    run_saliency_workflow.py <subcommand> --config <path> [--force] [--seed N] [--threads N]

Subcommands run one stage (generate-data, train, probe, distill, evaluate,
render) or all of them in order. Exit status: 0 on success, 1 when a stage
fails, 2 on an invalid configuration.
"""

import argparse
import os
import sys

from BaseMachine import ConfigError, StateMachine
from BaseMachine.logger import get_logger, setup_logging
from SaliencyWorkflow.pipeline_config import INITIAL_STATE, STAGE_ORDER, SaliencyWorkflowContext, state_definitions
from SaliencyWorkflow.run_config import load_run_config

# Get the directory of the script for relative paths
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG = os.path.join(SCRIPT_DIR, 'saliency.conf')

EXIT_OK = 0
EXIT_STAGE_FAILED = 1
EXIT_CONFIG_ERROR = 2

logger = get_logger('workflow')


def build_parser():
    parser = argparse.ArgumentParser(description='Benchmark saliency interpretations of toy language models')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in STAGE_ORDER + ('all',):
        sub = subparsers.add_parser(command, help=f"run {'every stage' if command == 'all' else 'the ' + command + ' stage'}")
        sub.add_argument('--config', type=str, default=DEFAULT_CONFIG,
                         help='Flat key = value configuration file (default: saliency.conf)')
        sub.add_argument('--force', action='store_true',
                         help='Rerun stages even when their artifacts are up to date')
        sub.add_argument('--seed', type=int,
                         help='Override seeds.master')
        sub.add_argument('--threads', type=int,
                         help='Override evaluate.threads')
    return parser


def run_pipeline(config_path, stages, force=False, seed=None, threads=None, environ=None):
    """Load the config, run the selected stages and return the exit status."""
    try:
        config = load_run_config(config_path, seed=seed, threads=threads, environ=environ)
    except ConfigError as e:
        for line in e.format_lines():
            logger.error(line)
        return EXIT_CONFIG_ERROR

    log_file = setup_logging(log_dir=os.path.join(config.paths.results, 'logs'))
    logger.info(f"Config: {os.path.abspath(config_path)}")
    logger.info(f"Stages: {', '.join(stages)}{' (forced)' if force else ''}")
    logger.info(f"Results directory: {config.paths.results}")
    if log_file:
        logger.info(f"Log file: {log_file}")

    context = SaliencyWorkflowContext(config=config, stages=stages, force=force)
    machine = StateMachine(
        context=context,
        state_definitions=state_definitions,
        initial_state=INITIAL_STATE,
    )
    machine.process()

    if machine.failed:
        logger.error(f"Workflow stopped in '{machine.failed_state}'; artifacts written so far are kept")
        return EXIT_STAGE_FAILED
    logger.info("Saliency Workflow completed successfully!")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    stages = list(STAGE_ORDER) if args.command == 'all' else [args.command]
    return run_pipeline(args.config, stages, force=args.force, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
