"""
Evaluation Configuration
Defines the state machine that runs the plausibility and faithfulness tests
and writes the JSON reports and per-item records.
"""

import os

from BaseMachine.logger import get_logger
from SaliencyWorkflow._01_generate_data.data_tools import PairReference, resolve_pairs
from SaliencyWorkflow._05_evaluation.evaluation_tools import (
    input_consistency,
    method_label,
    model_consistency,
    run_plausibility,
)
from SaliencyWorkflow.util.artifact_utils import read_jsonl, write_json, write_jsonl
from SaliencyWorkflow.util.checkpoint_utils import load_checkpoint
from SaliencyWorkflow.util.stage_utils import gated, load_instances

logger = get_logger(__name__)

TESTS = ('plausibility', 'input_consistency', 'model_consistency')


def record_label(method, composition):
    """File-name label of one interpretation: 'V_GI', or the bare baseline name."""
    return method if composition == '-' else f'{method}_{composition}'


def _store(context, test, model, dataset, interpretation, records, report):
    method, composition = method_label(interpretation)
    path = context.layout.records(test, model, dataset, record_label(method, composition))
    write_jsonl(path, records)
    context.outputs.append(path)
    grid = getattr(context, test)
    grid.setdefault(model, {}).setdefault(dataset, {}).setdefault(method, {})[composition] = \
        report.model_dump(mode='json')


def load_datasets_action(machine):
    context = machine.context
    for name in context.config.evaluate.datasets:
        instances = load_instances(context.layout.dataset(name))
        if not instances:
            logger.warning(f"[Evaluate] dataset {name} is empty; its reports will have n = 0")
            context.datasets[name] = []
            context.dataset_kinds[name] = 'gender' if name.startswith('gender') else 'number'
            continue
        kinds = {instance.kind for instance in instances}
        if len(kinds) != 1:
            raise ValueError(f"dataset {name} mixes agreement kinds {sorted(kinds)}")
        context.datasets[name] = instances
        context.dataset_kinds[name] = kinds.pop()
    logger.info("[Evaluate] datasets: " + ', '.join(f'{n} ({len(i)})' for n, i in context.datasets.items()))
    return "Datasets loaded"


def plausibility_action(machine):
    context = machine.context
    threads = context.config.evaluate.threads
    for arch in context.config.model.architectures:
        for name, instances in context.datasets.items():
            model = load_checkpoint(context.layout.probe_checkpoint(arch, context.dataset_kinds[name]))
            for interpretation in context.interpretations:
                records, report = run_plausibility(model, interpretation, instances, threads)
                _store(context, 'plausibility', arch, name, interpretation, records, report)
                logger.info(f"[Evaluate] plausibility {arch} {name} {'/'.join(method_label(interpretation))}: "
                            f"all={report.all} exp={report.exp} alt={report.alt} n={report.n}")
    _log_directional_check(context)
    return "Plausibility evaluated"


def _log_directional_check(context):
    """Report (never enforce) whether SG and IG beat V on the number set."""
    for arch, by_dataset in context.plausibility.items():
        methods = by_dataset.get('number', {})
        if 'V' not in methods:
            continue
        for composition, vanilla in methods['V'].items():
            for method in ('SG', 'IG'):
                other = methods.get(method, {}).get(composition)
                if other is None or other['all'] is None or vanilla['all'] is None:
                    continue
                verdict = '>=' if other['all'] >= vanilla['all'] else '<'
                logger.info(f"[Evaluate] {arch} number {composition}: {method} {other['all']:.3f} "
                            f"{verdict} V {vanilla['all']:.3f}")


def input_consistency_action(machine):
    context = machine.context
    threads = context.config.evaluate.threads
    for name, instances in context.datasets.items():
        pair_path = context.layout.pairs(name)
        if not os.path.exists(pair_path):
            logger.debug(f"[Evaluate] no perturbation pairs for {name}")
            continue
        pairs = resolve_pairs(read_jsonl(pair_path, PairReference), instances)
        for arch in context.config.model.architectures:
            model = load_checkpoint(context.layout.probe_checkpoint(arch, context.dataset_kinds[name]))
            for interpretation in context.interpretations:
                records, report = input_consistency(model, interpretation, pairs, threads)
                _store(context, 'input_consistency', arch, name, interpretation, records, report)
    return "Input consistency evaluated"


def model_consistency_action(machine):
    context = machine.context
    threads = context.config.evaluate.threads
    for arch in context.config.distill.architectures:
        for name, instances in context.datasets.items():
            kind = context.dataset_kinds[name]
            teacher = load_checkpoint(context.layout.probe_checkpoint(arch, kind))
            student = load_checkpoint(context.layout.student_checkpoint(arch, kind))
            for interpretation in context.interpretations:
                records, report = model_consistency(teacher, student, interpretation, instances, threads)
                _store(context, 'model_consistency', arch, name, interpretation, records, report)
    return "Model consistency evaluated"


def write_reports_action(machine):
    context = machine.context
    evaluate = context.config.evaluate
    for test in TESTS:
        if not getattr(evaluate, test):
            continue
        path = write_json(context.layout.report(test), getattr(context, test))
        context.outputs.append(path)
        context.summary[test] = str(path)
    return "Reports written"


def _next_enabled(machine, after):
    """Next test state after `after` whose toggle is on, else WriteReports."""
    order = [('plausibility', 'Plausibility'), ('input_consistency', 'InputConsistency'),
             ('model_consistency', 'ModelConsistency')]
    names = [test for test, _ in order]
    start = names.index(after) + 1 if after else 0
    for test, state in order[start:]:
        if getattr(machine.context.config.evaluate, test):
            return state
    return 'WriteReports'


# State machine configuration for evaluation
state_definitions = gated({
    'LoadDatasets': {
        'action': load_datasets_action,
        'next_state_func': lambda result, machine: _next_enabled(machine, None),
    },
    'Plausibility': {
        'action': plausibility_action,
        'next_state_func': lambda result, machine: _next_enabled(machine, 'plausibility'),
    },
    'InputConsistency': {
        'action': input_consistency_action,
        'next_state_func': lambda result, machine: _next_enabled(machine, 'input_consistency'),
    },
    'ModelConsistency': {
        'action': model_consistency_action,
        'next_state_func': lambda result, machine: _next_enabled(machine, 'model_consistency'),
    },
    'WriteReports': {
        'action': write_reports_action,
        'next_state_func': lambda result, machine: 'WriteManifest',
    },
}, first_state='LoadDatasets')
