"""Tests for token renderings and result tables."""

import csv
import re

import pytest

from SaliencyWorkflow._01_generate_data.data_tools import TestInstance
from SaliencyWorkflow._05_evaluation.evaluation_tools import Scenario, aggregate
from SaliencyWorkflow._06_report_render import render_tools
from SaliencyWorkflow._06_report_render.render_config import table_grid
from SaliencyWorkflow._06_report_render.render_tools import (
    emit_tables,
    intensities,
    occurrence_report,
    parse_table,
    render_html,
    render_interpretation,
    render_page,
    table_rows,
)
from SaliencyWorkflow.util.saliency_methods import SaliencyMap


def _instance(tokens, cues=(1,), attractors=(4,)):
    return TestInstance(id='inst-1', tokens=tokens, cues=list(cues), attractors=list(attractors),
                        gold_tag='SINGULAR', kind='number')


def _map(tokens, scores):
    return SaliencyMap(tokens=tokens, scores=scores, method='V', composition='GI', target=0, model_id='lstm.number')


TOKENS = ['the', 'author', 'that', 'loves', 'the', 'parents']


def _reports():
    return {
        'lstm': {
            'number': {
                'V/GI': aggregate([(Scenario.EXPECTED, 1.0), (Scenario.EXPECTED, 0.0), (Scenario.ALTERNATIVE, 1.0)]),
                'Random/-': aggregate([(Scenario.EXPECTED, 1.0), (Scenario.EXPECTED, 1.0),
                                       (Scenario.ALTERNATIVE, 0.0)]),
            },
            'gender': {
                'V/GI': aggregate([(Scenario.EXPECTED, 0.0)]),
            },
        },
        'transformer': {
            'number': {'V/GI': aggregate([(Scenario.ALTERNATIVE, 1.0)])},
        },
    }


class TestIntensities:
    def test_peak_magnitude_is_one_hundred(self):
        values = intensities([0.5, -2.0, 1.0])
        assert values == [25.0, -100.0, 50.0]
        assert max(abs(v) for v in values) == 100.0

    def test_all_zero_scores_stay_zero(self):
        assert intensities([0.0, 0.0]) == [0.0, 0.0]

    def test_sign_is_preserved(self):
        values = intensities([-0.3, 0.1, 0.0])
        assert values[0] < 0 < values[1] and values[2] == 0.0


class TestRenderInterpretation:
    def test_markers(self):
        rendered = render_interpretation(_instance(TOKENS, cues=[1], attractors=[5]),
                                         _map(TOKENS, [0.1, 0.9, 0.0, 0.2, 0.0, -0.4]), Scenario.EXPECTED, True)
        texts = [t.text for t in rendered.tokens]
        assert texts == ['the', '[author]', 'that', 'loves', 'the', '(parents)']
        assert rendered.tokens[1].intensity == 100.0
        assert rendered.predicted_tag == 'SINGULAR'

    def test_length_mismatch_is_rejected(self):
        with pytest.raises(ValueError, match="scores for"):
            render_interpretation(_instance(TOKENS), _map(TOKENS[:3], [0.1, 0.2, 0.3]), Scenario.EXPECTED, False)

    def test_html_hues_follow_the_sign(self):
        fragment = render_html(_instance(TOKENS), _map(TOKENS, [0.0, 1.0, 0.0, 0.0, -0.5, 0.0]),
                               Scenario.EXPECTED, True, predicted_tag='SINGULAR')
        assert 'rgba(0, 170, 0, 1.0000)">[author]' in fragment
        assert 'rgba(230, 190, 0, 0.5000)">(the)' in fragment
        assert '&rarr; SINGULAR' in fragment
        assert 'Expected: pass' in fragment

    def test_html_escapes_token_text(self):
        tokens = ['<b>', 'x&y', 'the', 'a', '"q"']
        fragment = render_html(_instance(tokens, cues=[1], attractors=[3]), _map(tokens, [1.0] * 5),
                               Scenario.ALTERNATIVE, False, predicted_tag='PLURAL')
        assert '&lt;b&gt;' in fragment
        assert '[x&amp;y]' in fragment
        assert '&quot;q&quot;' in fragment
        assert 'Alternative: fail' in fragment

    def test_one_span_per_token_with_intensity(self):
        fragment = render_html(_instance(TOKENS), _map(TOKENS, [1.0, -1.0, 0.5, 0.0, 0.25, 2.0]),
                               Scenario.EXPECTED, False)
        values = [float(v) for v in re.findall(r'data-intensity="([-0-9.]+)"', fragment)]
        assert values == [50.0, -50.0, 25.0, 0.0, 12.5, 100.0]

    def test_page_wraps_fragments(self):
        page = render_page('lstm / number / V GI', ['<div>a</div>', '<div>b</div>'])
        assert page.startswith('<!DOCTYPE html>')
        assert page.count('<li>') == 2
        assert '<title>lstm / number / V GI</title>' in page


class TestTables:
    def test_every_row_has_the_header_width(self):
        rows = table_rows(_reports(), ['number', 'gender'])
        assert rows[0] == ['model', 'number:all', 'number:exp', 'number:alt', 'gender:all', 'gender:exp', 'gender:alt']
        assert all(len(row) == 7 for row in rows)

    def test_layout_per_architecture(self):
        rows = table_rows(_reports(), ['number', 'gender'])
        assert [row[0] for row in rows[1:]] == ['lstm', 'Random/-', 'V/GI', 'transformer', 'V/GI']
        lstm = rows[1]
        assert lstm[1] == '' and lstm[2] == f'({2 / 3!r})' and lstm[3] == f'({1 / 3!r})'
        random_row = rows[2]
        assert random_row[4:] == ['', '', '']

    def test_occurrence_row_follows_the_report_counting_most_items(self, monkeypatch):
        warnings = []
        monkeypatch.setattr(render_tools.logger, 'warning', warnings.append)
        reports = {'lstm': {'number': {
            'V/GI': aggregate([(Scenario.EXPECTED, 1.0), (Scenario.ALTERNATIVE, 0.0)], excluded=1),
            'Random/-': aggregate([(Scenario.EXPECTED, 1.0), (Scenario.EXPECTED, 0.0), (Scenario.ALTERNATIVE, 0.0)]),
        }}}
        header = table_rows(reports, ['number'])[1]
        assert header == ['lstm', '', f'({2 / 3!r})', f'({1 / 3!r})']
        [message] = warnings
        assert "['V/GI']" in message and 'lstm/number' in message

    def test_matching_occurrence_fractions_log_nothing(self, monkeypatch):
        warnings = []
        monkeypatch.setattr(render_tools.logger, 'warning', warnings.append)
        assert occurrence_report(_reports()['lstm']['number']).n == 3
        assert occurrence_report({}) is None
        assert warnings == []

    def test_round_trip_through_the_csv(self, tmp_path):
        reports = _reports()
        path = emit_tables(reports, tmp_path / 'tables' / 'plausibility.csv', ['number', 'gender'])
        parsed = parse_table(path)
        for arch, by_dataset in reports.items():
            for dataset, by_label in by_dataset.items():
                for label, report in by_label.items():
                    assert parsed[arch][dataset][label] == {'all': report.all, 'exp': report.exp, 'alt': report.alt}
        assert parsed['lstm']['number']['(occurrence)'] == {'exp': 2 / 3, 'alt': 1 / 3}
        assert 'V/GI' not in parsed['transformer']['gender']

    def test_empty_reports_give_a_header_only_file(self, tmp_path):
        path = emit_tables({}, tmp_path / 'empty.csv', ['number'])
        with open(path, newline='', encoding='utf-8') as f:
            assert list(csv.reader(f)) == [['model', 'number:all', 'number:exp', 'number:alt']]
        assert parse_table(path) == {}

    def test_table_grid_flattens_the_report_json(self):
        report = aggregate([(Scenario.EXPECTED, 1.0)]).model_dump(mode='json')
        grid = table_grid({'lstm': {'number': {'V': {'GI': report}, 'Nearest': {'-': report}}}})
        assert set(grid['lstm']['number']) == {'V/GI', 'Nearest/-'}
        assert grid['lstm']['number']['V/GI'].all == 1.0
