"""
Tools for static report emission: CSV result tables and colour-coded
per-token saliency renderings.
"""

import csv
import html
import io
import os
from typing import Dict, List, Mapping, Optional, Sequence

from pydantic import BaseModel, Field

from BaseMachine.logger import get_logger
from SaliencyWorkflow._01_generate_data.data_tools import TestInstance
from SaliencyWorkflow._05_evaluation.evaluation_tools import AggregateReport, Scenario
from SaliencyWorkflow.util.saliency_methods import SaliencyMap

logger = get_logger(__name__)

POSITIVE_RGB = (0, 170, 0)
NEGATIVE_RGB = (230, 190, 0)
TABLE_COLUMNS = ('all', 'exp', 'alt')

# reports[architecture][dataset][label] -> AggregateReport, label 'V/GI' or 'Random/-'
ReportGrid = Mapping[str, Mapping[str, Mapping[str, AggregateReport]]]


class RenderedToken(BaseModel):
    text: str = Field(description="Token with its cue/attractor marker")
    intensity: float = Field(ge=-100.0, le=100.0, description="Signed normalized saliency")


class RenderedInterpretation(BaseModel):
    tokens: List[RenderedToken] = Field(description="Prefix tokens in order")
    predicted_tag: str = Field(description="Tag the interpretation explains")
    scenario: Scenario = Field(description="Scenario of the prediction")
    passed: bool = Field(description="Plausibility verdict")


def intensities(scores: Sequence[float]) -> List[float]:
    """100 * score / max|score|, per instance; all zeros when every score is zero."""
    peak = max((abs(s) for s in scores), default=0.0)
    if peak == 0.0:
        return [0.0] * len(scores)
    return [100.0 * s / peak for s in scores]


def marked_token(token: str, position: int, instance: TestInstance) -> str:
    if position in instance.cues:
        return f'[{token}]'
    if position in instance.attractors:
        return f'({token})'
    return token


def render_interpretation(instance: TestInstance, saliency: SaliencyMap, scenario: Scenario, passed: bool,
                          predicted_tag: Optional[str] = None) -> RenderedInterpretation:
    if len(saliency.scores) != len(instance.tokens):
        raise ValueError(f"{instance.id}: {len(saliency.scores)} scores for {len(instance.tokens)} tokens")
    tag = predicted_tag if predicted_tag is not None else instance.gold_tag
    return RenderedInterpretation(
        tokens=[RenderedToken(text=marked_token(token, i, instance), intensity=value)
                for i, (token, value) in enumerate(zip(instance.tokens, intensities(saliency.scores)))],
        predicted_tag=tag,
        scenario=scenario,
        passed=passed,
    )


def _background(intensity: float) -> str:
    red, green, blue = POSITIVE_RGB if intensity > 0 else NEGATIVE_RGB
    return f'rgba({red}, {green}, {blue}, {abs(intensity) / 100.0:.4f})'


def render_html(instance: TestInstance, saliency: SaliencyMap, scenario: Scenario, passed: bool,
                predicted_tag: Optional[str] = None) -> str:
    """HTML fragment: one span per token, green for positive, yellow for negative saliency."""
    rendered = render_interpretation(instance, saliency, scenario, passed, predicted_tag)
    spans = [
        f'<span class="token" data-intensity="{token.intensity:.4f}" '
        f'style="background-color: {_background(token.intensity)}">{html.escape(token.text)}</span>'
        for token in rendered.tokens
    ]
    verdict = 'pass' if passed else 'fail'
    return (
        f'<div class="interpretation" id="{html.escape(instance.id)}">'
        f'{" ".join(spans)} '
        f'<span class="prediction">&rarr; {html.escape(rendered.predicted_tag)}</span> '
        f'<span class="verdict {verdict}">{Scenario(scenario).value}: {verdict}</span>'
        f'</div>'
    )


def render_page(title: str, fragments: Sequence[str]) -> str:
    body = '\n'.join(f'<li>{fragment}</li>' for fragment in fragments)
    return (
        '<!DOCTYPE html>\n'
        '<html>\n'
        f'<head><meta charset="utf-8"><title>{html.escape(title)}</title></head>\n'
        '<body>\n'
        f'<h1>{html.escape(title)}</h1>\n'
        f'<ul>\n{body}\n</ul>\n'
        '</body>\n'
        '</html>\n'
    )


# ----------------------------------------------------------------------------
# Tables
# ----------------------------------------------------------------------------

def _cell(value: Optional[float], parenthesized: bool = False) -> str:
    if value is None:
        return ''
    return f'({value!r})' if parenthesized else repr(value)


def table_datasets(reports: ReportGrid) -> List[str]:
    names = set()
    for by_dataset in reports.values():
        names.update(by_dataset)
    return sorted(names)


def occurrence_report(by_label: Mapping[str, AggregateReport], where: str = '') -> Optional[AggregateReport]:
    """
    The report whose occurrence fractions head an architecture's table block:
    the one counting the most items (ties by label). Methods that excluded
    items can disagree with it; those are logged, not dropped.
    """
    if not by_label:
        return None
    labels = sorted(by_label, key=lambda label: (-by_label[label].n, label))
    chosen = by_label[labels[0]]
    differing = [label for label in labels[1:]
                 if (by_label[label].occ_exp, by_label[label].occ_alt) != (chosen.occ_exp, chosen.occ_alt)]
    if differing:
        logger.warning(f"{where}: occurrence fractions of {differing} differ from {labels[0]} "
                       f"({chosen.occ_exp}, {chosen.occ_alt}); the table shows {labels[0]}'s")
    return chosen


def table_rows(reports: ReportGrid, datasets: Optional[Sequence[str]] = None) -> List[List[str]]:
    """
    Header, then per architecture an occurrence row and one row per
    method/composition label. Every row has 1 + 3 * len(datasets) cells.
    """
    datasets = list(table_datasets(reports) if datasets is None else datasets)
    rows = [['model'] + [f'{dataset}:{column}' for dataset in datasets for column in TABLE_COLUMNS]]
    for arch in sorted(reports):
        by_dataset = reports[arch]
        occurrence = [arch]
        for dataset in datasets:
            chosen = occurrence_report(by_dataset.get(dataset, {}), f'{arch}/{dataset}')
            occurrence += ['', _cell(chosen.occ_exp if chosen else None, True),
                           _cell(chosen.occ_alt if chosen else None, True)]
        rows.append(occurrence)

        labels = sorted({label for dataset in datasets for label in by_dataset.get(dataset, {})})
        for label in labels:
            row = [label]
            for dataset in datasets:
                report = by_dataset.get(dataset, {}).get(label)
                row += [_cell(getattr(report, column)) if report else '' for column in TABLE_COLUMNS]
            rows.append(row)
    return rows


def emit_tables(reports: ReportGrid, path, datasets: Optional[Sequence[str]] = None) -> str:
    """Write one CSV table; an empty report set gives a header-only file."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator='\n').writerows(table_rows(reports, datasets))
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(buffer.getvalue())
    logger.debug(f"Wrote table {path}")
    return str(path)


def _parse_cell(text: str) -> Optional[float]:
    if text == '':
        return None
    if text.startswith('(') and text.endswith(')'):
        text = text[1:-1]
    return float(text)


def parse_table(path) -> Dict[str, Dict[str, Dict[str, Dict[str, Optional[float]]]]]:
    """
    Read a table back into arch -> dataset -> label -> {all, exp, alt}, plus
    the occurrence fractions under label '(occurrence)' as {exp, alt}.
    """
    with open(path, encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    if not rows:
        return {}
    header = rows[0]
    datasets = [header[i].rsplit(':', 1)[0] for i in range(1, len(header), len(TABLE_COLUMNS))]
    parsed: Dict[str, Dict[str, Dict[str, Dict[str, Optional[float]]]]] = {}
    arch = None
    for row in rows[1:]:
        if len(row) != len(header):
            raise ValueError(f"{path}: row {row[:1]} has {len(row)} cells, expected {len(header)}")
        cells = row[1:]
        is_occurrence = all(c == '' or (c.startswith('(') and c.endswith(')')) for c in cells) and '/' not in row[0]
        if is_occurrence:
            arch = row[0]
            parsed[arch] = {dataset: {'(occurrence)': {'exp': _parse_cell(cells[3 * i + 1]),
                                                       'alt': _parse_cell(cells[3 * i + 2])}}
                            for i, dataset in enumerate(datasets)}
            continue
        if arch is None:
            raise ValueError(f"{path}: method row {row[0]!r} before any architecture row")
        for i, dataset in enumerate(datasets):
            values = {column: _parse_cell(cells[3 * i + j]) for j, column in enumerate(TABLE_COLUMNS)}
            if any(v is not None for v in values.values()):
                parsed[arch][dataset][row[0]] = values
    return parsed

