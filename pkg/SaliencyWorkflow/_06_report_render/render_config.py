"""
Report Rendering Configuration
Defines the state machine that turns the evaluation reports into CSV tables
and colour-coded HTML pages.
"""

import os

from BaseMachine.logger import get_logger
from SaliencyWorkflow._05_evaluation.evaluation_config import record_label
from SaliencyWorkflow._05_evaluation.evaluation_tools import AggregateReport, PlausibilityRecord
from SaliencyWorkflow._06_report_render.render_tools import emit_tables, render_html, render_page
from SaliencyWorkflow.util.artifact_utils import read_json, read_jsonl
from SaliencyWorkflow.util.stage_utils import gated, load_instances

logger = get_logger(__name__)


def table_grid(report_json):
    """model -> dataset -> method -> composition nesting to model -> dataset -> 'method/composition'."""
    grid = {}
    for model, by_dataset in report_json.items():
        for dataset, by_method in by_dataset.items():
            for method, by_composition in by_method.items():
                for composition, values in by_composition.items():
                    grid.setdefault(model, {}).setdefault(dataset, {})[f'{method}/{composition}'] = \
                        AggregateReport.model_validate(values)
    return grid


def load_reports_action(machine):
    context = machine.context
    for test in context.enabled_tests():
        context.reports[test] = read_json(context.layout.report(test))
    return "Reports loaded"


def emit_tables_action(machine):
    context = machine.context
    datasets = list(context.config.evaluate.datasets)
    for test, report_json in context.reports.items():
        path = context.layout.table(test)
        emit_tables(table_grid(report_json), path, datasets)
        context.outputs.append(path)
        logger.info(f"[Render] table {path}")
    return "Tables written"


def render_pages_action(machine):
    """One page per (model, dataset, method, composition) showing the first plausibility records."""
    context = machine.context
    examples = context.config.render.examples
    report_json = context.reports.get('plausibility', {})
    pages = 0
    for model, by_dataset in sorted(report_json.items()):
        for dataset, by_method in sorted(by_dataset.items()):
            instances = {i.id: i for i in load_instances(context.layout.dataset(dataset))}
            for method, by_composition in sorted(by_method.items()):
                for composition in sorted(by_composition):
                    label = record_label(method, composition)
                    records_path = context.layout.records('plausibility', model, dataset, label)
                    if not os.path.exists(records_path):
                        logger.warning(f"[Render] missing records {records_path}")
                        continue
                    records = read_jsonl(records_path, PlausibilityRecord)[:examples]
                    fragments = [render_html(instances[r.instance_id], r.saliency, r.scenario, r.passed,
                                             r.predicted_tag)
                                 for r in records]
                    path = context.layout.page(model, dataset, label)
                    os.makedirs(os.path.dirname(path), exist_ok=True)
                    with open(path, 'w', encoding='utf-8') as f:
                        f.write(render_page(f'{model} / {dataset} / {method} {composition}', fragments))
                    context.outputs.append(path)
                    pages += 1
    context.summary['pages'] = pages
    logger.info(f"[Render] wrote {pages} page(s) under {context.layout.html_dir}")
    return "Pages rendered"


# State machine configuration for report rendering
state_definitions = gated({
    'LoadReports': {
        'action': load_reports_action,
        'next_state_func': lambda result, machine: 'EmitTables',
    },
    'EmitTables': {
        'action': emit_tables_action,
        'next_state_func': lambda result, machine: 'RenderPages',
    },
    'RenderPages': {
        'action': render_pages_action,
        'next_state_func': lambda result, machine: 'WriteManifest',
    },
}, first_state='LoadReports')
