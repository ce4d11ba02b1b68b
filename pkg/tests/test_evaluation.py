"""Tests for the plausibility and consistency tests, baselines and aggregation."""

import itertools
import math

import numpy as np
import pytest

from conftest import random_prefix
from SaliencyWorkflow._01_generate_data.data_tools import (
    PerturbationPair,
    TestInstance,
    filter_nearest_attractor,
    generate_number_agreement,
    make_perturbation_pairs,
)
from SaliencyWorkflow._03_probe_finetune.probe_tools import probe_accuracy
from SaliencyWorkflow._05_evaluation.evaluation_tools import (
    AggregateReport,
    BaselineConfig,
    ConsistencyRecord,
    EmptyAnnotationError,
    PlausibilityRecord,
    Scenario,
    UndefinedCorrelationError,
    aggregate,
    baseline_nearest,
    baseline_random,
    classify_scenario,
    input_consistency,
    mean_correlation,
    method_label,
    model_consistency,
    pearson,
    plausibility_test,
    run_plausibility,
)
from SaliencyWorkflow.util.language_models import RecurrentSpec, Vocabulary, init_model
from SaliencyWorkflow.util.saliency_methods import SaliencyConfig

VANILLA_GI = SaliencyConfig(method='V', composition='GI')


@pytest.fixture(scope='module')
def number_data():
    instances, templates = generate_number_agreement(seed=0, count=60)
    vocab = Vocabulary.build(t for i in instances for t in i.tokens)
    return instances, templates, vocab


@pytest.fixture
def number_model(number_data):
    _, _, vocab = number_data
    return init_model(RecurrentSpec(embedding_dim=8, hidden_size=12, num_layers=2), vocab, 0, model_id='lstm.number')


def _instance(instance_id, length, cues, attractors, gold='SINGULAR'):
    return TestInstance(id=instance_id, tokens=[f'w{i}' for i in range(length)], cues=cues, attractors=attractors,
                        gold_tag=gold, kind='number')


def _brute_force(scores, cues, attractors, scenario):
    if scenario is Scenario.EXPECTED:
        return any(all(scores[c] > scores[a] for a in attractors) for c in cues)
    return any(all(scores[a] > scores[c] for c in cues) for a in attractors)


def _two_pass_pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


class TestScenario:
    def test_matching_tags_are_expected(self):
        assert classify_scenario('SINGULAR', 'SINGULAR') is Scenario.EXPECTED

    def test_mismatching_tags_are_alternative(self):
        assert classify_scenario('PLURAL', 'SINGULAR') is Scenario.ALTERNATIVE

    def test_occurrence_fraction_equals_probe_accuracy(self, number_model, number_data):
        instances = number_data[0]
        _, report = run_plausibility(number_model, BaselineConfig(name='Nearest'), instances)
        assert report.occ_exp == pytest.approx(probe_accuracy(number_model, instances), abs=1e-12)


class TestPlausibilityRule:
    def test_cue_above_attractor_passes_expected(self):
        assert plausibility_test([0.9, 0.3], [0], [1], Scenario.EXPECTED)
        assert not plausibility_test([0.9, 0.3], [0], [1], Scenario.ALTERNATIVE)

    def test_ties_fail_both_scenarios(self):
        assert not plausibility_test([0.5, 0.5], [0], [1], Scenario.EXPECTED)
        assert not plausibility_test([0.5, 0.5], [0], [1], Scenario.ALTERNATIVE)

    def test_lattice_matches_brute_force(self):
        lattice = np.linspace(-1.0, 1.0, 10)
        cues, attractors = [0, 2], [1, 3]
        checked = 0
        for scores in itertools.product(lattice, repeat=4):
            for scenario in Scenario:
                assert plausibility_test(scores, cues, attractors, scenario) == \
                    _brute_force(scores, cues, attractors, scenario)
            checked += 1
        assert checked == 10 ** 4

    def test_invariant_under_increasing_transforms(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            scores = rng.normal(size=6)
            cues, attractors = [0, 3], [1, 5]
            for scenario in Scenario:
                verdict = plausibility_test(scores, cues, attractors, scenario)
                for transform in (np.exp, np.arctan, lambda s: 3.0 * s + 1.0):
                    assert plausibility_test(transform(scores), cues, attractors, scenario) == verdict

    def test_empty_sets_are_reported(self):
        with pytest.raises(EmptyAnnotationError):
            plausibility_test([0.1, 0.2], [0], [], Scenario.EXPECTED)

    def test_out_of_range_position_is_an_error(self):
        with pytest.raises(ValueError, match="outside"):
            plausibility_test([0.1, 0.2], [0], [4], Scenario.EXPECTED)

    def test_record_rejects_inconsistent_verdict(self):
        saliency = baseline_nearest(_instance('x', 3, [0], [2]))
        with pytest.raises(ValueError, match="contradicts"):
            PlausibilityRecord(instance_id='x', scenario=Scenario.EXPECTED, predicted_tag='SINGULAR',
                               gold_tag='SINGULAR', passed=True, max_cue=0.0, max_attractor=1.0,
                               cues=[0], attractors=[2], saliency=saliency)


class TestBaselines:
    def test_random_is_seeded_per_instance(self):
        instance = _instance('a', 6, [1], [4])
        assert baseline_random(instance, 3) == baseline_random(instance, 3)
        assert baseline_random(instance, 3).scores != baseline_random(instance, 4).scores
        assert baseline_random(instance, 3).scores != baseline_random(_instance('b', 6, [1], [4]), 3).scores
        assert all(0.0 <= s < 1.0 for s in baseline_random(instance, 3).scores)

    @pytest.mark.parametrize('cues, attractors, expected_rate', [([1], [3], 0.5), ([0, 2], [4], 2 / 3)])
    def test_random_pass_rate_within_three_sigma(self, cues, attractors, expected_rate):
        n = 10_000
        passes = sum(plausibility_test(baseline_random(_instance(f'i{k}', 6, cues, attractors), 0),
                                       cues, attractors, Scenario.EXPECTED)
                     for k in range(n))
        sigma = math.sqrt(expected_rate * (1 - expected_rate) / n)
        assert abs(passes / n - expected_rate) <= 3 * sigma

    def test_nearest_scores_the_last_annotated_position(self):
        saliency = baseline_nearest(_instance('n', 7, [2], [5]))
        assert saliency.scores == [0, 0, 0, 0, 0, 1, 0]
        assert not plausibility_test(saliency, [2], [5], Scenario.EXPECTED)
        assert plausibility_test(saliency, [2], [5], Scenario.ALTERNATIVE)

    def test_nearest_cue_passes_expected(self):
        saliency = baseline_nearest(_instance('n', 7, [5], [2]))
        assert plausibility_test(saliency, [5], [2], Scenario.EXPECTED)

    def test_baseline_labels(self):
        assert method_label(BaselineConfig(name='Random')) == ('Random', '-')
        assert method_label(SaliencyConfig(method='IG', composition='VN')) == ('IG', 'VN')


class TestRunPlausibility:
    def test_nearest_on_attractor_nearest_data(self, number_model, number_data):
        instances = filter_nearest_attractor(number_data[0])
        records, report = run_plausibility(number_model, BaselineConfig(name='Nearest'), instances)
        assert report.n == len(instances) == len(records)
        assert report.exp in (0.0, None)
        assert report.alt in (1.0, None)

    def test_constant_maps_never_pass(self, number_model, number_data):
        number_model.params['probe.weight'][:] = 0.0
        records, report = run_plausibility(number_model, VANILLA_GI, number_data[0])
        assert all(set(r.saliency.scores) == {0.0} for r in records)
        assert not any(r.passed for r in records)
        assert report.all == 0.0

    def test_target_is_the_argmax_prediction(self, number_model, number_data):
        records, _ = run_plausibility(number_model, VANILLA_GI, number_data[0][:10])
        for record in records:
            assert record.saliency.target == number_model.probe_tags.index(record.predicted_tag)
            assert record.saliency.model_id == 'lstm.number'

    def test_empty_annotations_are_excluded_and_counted(self, number_model, number_data):
        instances = number_data[0][:5]
        broken = instances[0].model_copy(update={'id': 'broken', 'attractors': []})
        records, report = run_plausibility(number_model, VANILLA_GI, instances + [broken])
        assert [r.instance_id for r in records] == [i.id for i in instances]
        assert report.excluded == 1

    def test_thread_count_does_not_change_results(self, number_model, number_data):
        config = SaliencyConfig(method='SG', composition='GI', sg_samples=4, sg_seed=2)
        single = run_plausibility(number_model, config, number_data[0][:12], threads=1)
        pooled = run_plausibility(number_model, config, number_data[0][:12], threads=4)
        assert single == pooled


class TestPearson:
    def test_self_correlation_is_one(self):
        assert pearson([1.0, 3.0, 2.0, 5.0], [1.0, 3.0, 2.0, 5.0]) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize('a, b', [(2.5, -1.0), (-0.3, 4.0)])
    def test_affine_transform_gives_sign(self, a, b):
        x = np.random.default_rng(0).normal(size=9)
        assert pearson(x, a * x + b) == pytest.approx(math.copysign(1.0, a), abs=1e-12)

    def test_matches_two_pass_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(2, 15))
            x, y = rng.normal(size=n).tolist(), rng.normal(size=n).tolist()
            assert abs(pearson(x, y) - _two_pass_pearson(x, y)) <= 1e-12

    def test_constant_vector_is_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([0.2, 0.2, 0.2], [1.0, 2.0, 3.0])

    @pytest.mark.parametrize('x, y', [([1.0], [2.0]), ([1.0, 2.0], [1.0, 2.0, 3.0])])
    def test_bad_lengths_are_rejected(self, x, y):
        with pytest.raises(ValueError):
            pearson(x, y)

    def test_record_rejects_out_of_range_r(self):
        saliency = baseline_nearest(_instance('x', 3, [0], [2]))
        with pytest.raises(ValueError, match="outside"):
            ConsistencyRecord(item_id='x', scenario=Scenario.EXPECTED, pearson_r=1.5, first=saliency, second=saliency)


class TestInputConsistency:
    def test_identical_members_correlate_perfectly(self, number_model, number_data):
        instance = number_data[0][0]
        pair = PerturbationPair(first=instance, second=instance, template_id=instance.template_id)
        [record], report = input_consistency(number_model, VANILLA_GI, [pair])
        assert record.pearson_r == pytest.approx(1.0, abs=1e-12)
        assert report.n == 1

    def test_constant_maps_are_excluded(self, number_model, number_data):
        instances, templates, _ = number_data
        pairs = make_perturbation_pairs(templates, instances)[:6]
        number_model.params['probe.weight'][:] = 0.0
        records, report = input_consistency(number_model, VANILLA_GI, pairs)
        assert records == []
        assert report.excluded == len(pairs)
        assert report.n == 0 and report.all is None

    def test_mean_recomputed_from_serialized_records(self, number_model, number_data):
        instances, templates, _ = number_data
        pairs = make_perturbation_pairs(templates, instances)[:15]
        records, report = input_consistency(number_model, VANILLA_GI, pairs)
        restored = [ConsistencyRecord.model_validate_json(r.model_dump_json()) for r in records]
        assert mean_correlation(restored) == pytest.approx(report.all, abs=1e-12)
        assert -1.0 <= report.all <= 1.0

    def test_random_baseline_pairs(self, number_model, number_data):
        instances, templates, _ = number_data
        pairs = make_perturbation_pairs(templates, instances)[:10]
        records, _ = input_consistency(number_model, BaselineConfig(name='Random', seed=1), pairs)
        assert [r.item_id for r in records] == [f'{p.first.id}:{p.second.id}' for p in pairs]


class TestModelConsistency:
    def test_exact_copy_correlates_perfectly(self, number_model, number_data):
        student = number_model.copy(model_id='lstm-student.number')
        records, report = model_consistency(number_model, student, VANILLA_GI, number_data[0][:10])
        assert all(r.pearson_r == pytest.approx(1.0, abs=1e-12) for r in records)
        assert report.all == pytest.approx(1.0, abs=1e-12)
        assert {r.second.model_id for r in records} == {'lstm-student.number'}

    def test_vocabularies_must_match(self, number_model, number_data):
        other = init_model(number_model.spec, Vocabulary.build(['a', 'b']), 0, model_id='other')
        with pytest.raises(ValueError, match="vocabulary"):
            model_consistency(number_model, other, VANILLA_GI, number_data[0][:2])

    def test_report_satisfies_weighted_mean_identity(self, number_model, number_data):
        student = init_model(number_model.spec, number_model.vocab, 1, model_id='student')
        _, report = model_consistency(number_model, student, VANILLA_GI, number_data[0][:20])
        exp = report.exp if report.exp is not None else 0.0
        alt = report.alt if report.alt is not None else 0.0
        assert report.all == pytest.approx(report.occ_exp * exp + report.occ_alt * alt, abs=1e-12)

    @pytest.mark.slow
    def test_unrelated_model_correlation_is_near_zero(self, trained_number_model):
        vocab = trained_number_model.vocab
        rng = np.random.default_rng(0)
        instances = []
        for k in range(200):
            prefix = random_prefix(rng, len(vocab), low=4, high=9)
            instances.append(TestInstance(id=f'r{k}', tokens=vocab.decode(prefix), cues=[0], attractors=[1],
                                          gold_tag='SINGULAR', kind='number'))
        fresh = init_model(trained_number_model.spec, vocab, 99, model_id='fresh')
        _, report = model_consistency(trained_number_model, fresh, VANILLA_GI, instances)
        assert report.n >= 190
        assert abs(report.all) < 0.2


class TestAggregate:
    def test_weighted_mean_identity(self):
        values = [(Scenario.EXPECTED, 1.0)] * 7 + [(Scenario.ALTERNATIVE, 0.0)] * 2 + [(Scenario.ALTERNATIVE, 1.0)]
        report = aggregate(values, excluded=2)
        assert (report.n, report.n_exp, report.n_alt, report.excluded) == (10, 7, 3, 2)
        assert report.occ_exp + report.occ_alt == pytest.approx(1.0)
        assert report.all == pytest.approx(report.occ_exp * report.exp + report.occ_alt * report.alt, abs=1e-12)
        assert report.all == pytest.approx(0.8)

    def test_empty_scenario_is_undefined(self):
        report = aggregate([(Scenario.EXPECTED, 0.25), (Scenario.EXPECTED, 0.75)])
        assert report.alt is None and report.occ_alt == 0.0
        assert report.all == report.exp == 0.5

    def test_nothing_counted(self):
        assert aggregate([], excluded=3) == AggregateReport(all=None, exp=None, alt=None, occ_exp=None,
                                                            occ_alt=None, n=0, n_exp=0, n_alt=0, excluded=3)
