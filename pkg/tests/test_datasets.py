"""Tests for the synthetic generators, perturbation pairs and the PTB-style filter."""

import pytest

from SaliencyWorkflow._01_generate_data.data_tools import (
    ATTRACTOR_WINDOW,
    DEFAULT_GENDER_LEXICON,
    DEFAULT_NUMBER_LEXICON,
    EOS,
    GenderLexicon,
    LexiconError,
    NumberLexicon,
    PairReference,
    PerturbationPair,
    TaggedCorpusRecord,
    TestInstance,
    extract_cue_attractor,
    filter_nearest_attractor,
    filter_ptb_style,
    gender_templates,
    generate_gender_agreement,
    generate_lm_corpus,
    generate_number_agreement,
    make_perturbation_pairs,
    number_templates,
    pair_references,
    passes_ptb_criteria,
    resolve_pairs,
)


def _tagged(tokens, pos, nouns, subject_index, record_id='s1'):
    return TaggedCorpusRecord(id=record_id, tokens=tokens, pos=pos, noun_number=nouns, subject_index=subject_index)


class TestNumberAgreement:
    def test_is_pure_function_of_seed_and_count(self):
        first, _ = generate_number_agreement(seed=4, count=50)
        second, _ = generate_number_agreement(seed=4, count=50)
        other, _ = generate_number_agreement(seed=5, count=50)
        assert first == second
        assert first != other

    def test_one_cue_one_attractor_everywhere(self):
        instances, _ = generate_number_agreement(seed=0, count=300)
        assert len(instances) == 300
        for instance in instances:
            assert len(instance.cues) == 1 and len(instance.attractors) == 1
            assert instance.kind == 'number'

    def test_gold_tag_is_the_subject_number(self):
        singular = {n.word for n in DEFAULT_NUMBER_LEXICON.nouns if n.number == 'sg'}
        instances, _ = generate_number_agreement(seed=1, count=200)
        for instance in instances:
            subject = instance.tokens[instance.cues[0]]
            attractor = instance.tokens[instance.attractors[0]]
            assert instance.gold_tag == ('SINGULAR' if subject in singular else 'PLURAL')
            assert (subject in singular) != (attractor in singular)

    def test_subject_relative_example(self):
        template = next(t for t in number_templates() if t.template_id == 'subj_rel:sg-pl')
        assert template.position(template.cue_slot) == 1
        assert template.position(template.attractor_slot) == 5
        assert template.gold_tag == 'SINGULAR'
        instances, _ = generate_number_agreement(seed=2, count=400)
        example = next(i for i in instances if i.template_id == 'subj_rel:sg-pl')
        assert example.tokens[2] == 'that'
        assert example.tokens[3] in {v.singular for v in DEFAULT_NUMBER_LEXICON.transitive_verbs}
        assert (example.cues, example.attractors) == ([1], [5])

    def test_twenty_four_templates(self):
        templates = number_templates()
        assert len(templates) == 24
        assert len({t.template_id for t in templates}) == 24

    def test_each_construction_pairs_a_subject_number_with_the_other_attractor_number(self):
        ids = [t.template_id for t in number_templates()]
        constructions = {template_id.split(':')[0] for template_id in ids}
        assert len(constructions) == 12
        assert {template_id.split(':')[1] for template_id in ids} == {'sg-pl', 'pl-sg'}

    def test_lexicon_without_plurals_is_rejected(self):
        lexicon = NumberLexicon(
            nouns=[n for n in DEFAULT_NUMBER_LEXICON.nouns if n.number == 'sg'],
            transitive_verbs=DEFAULT_NUMBER_LEXICON.transitive_verbs,
            intransitive_verbs=DEFAULT_NUMBER_LEXICON.intransitive_verbs,
            prepositions=DEFAULT_NUMBER_LEXICON.prepositions,
        )
        with pytest.raises(LexiconError, match="plural"):
            generate_number_agreement(seed=0, count=10, lexicon=lexicon)


class TestGenderAgreement:
    def test_feminine_entity_is_always_the_cue(self):
        genders = {p.word: p.gender for p in DEFAULT_GENDER_LEXICON.persons}
        instances, _ = generate_gender_agreement(seed=0, count=200)
        for instance in instances:
            assert instance.gold_tag == 'FEMININE'
            assert genders[instance.tokens[instance.cues[0]]] == 'f'
            assert genders[instance.tokens[instance.attractors[0]]] == 'm'

    def test_same_gender_draws_are_excluded(self):
        genders = {p.word: p.gender for p in DEFAULT_GENDER_LEXICON.persons}
        instances, _ = generate_gender_agreement(seed=3, count=300)
        for instance in instances:
            e1, e2 = instance.tokens[1], instance.tokens[4]
            assert genders[e1] != genders[e2]

    def test_subject_convention_cues_the_subject(self):
        instances, _ = generate_gender_agreement(seed=0, count=100, expected='subject')
        genders = {p.word: p.gender for p in DEFAULT_GENDER_LEXICON.persons}
        for instance in instances:
            assert instance.cues == [1]
            assert instance.gold_tag == ('FEMININE' if genders[instance.tokens[1]] == 'f' else 'MASCULINE')

    def test_examine_example(self):
        template = next(t for t in gender_templates() if t.template_id == 'examine:F-M')
        assert template.pattern[:5] == ['the', '{e1}', 'examined', 'the', '{e2}']
        assert template.pattern[-1] == 'because'
        assert template.cue_slot == 'e1'

    def test_single_gender_lexicon_is_rejected(self):
        lexicon = GenderLexicon(persons=[p for p in DEFAULT_GENDER_LEXICON.persons if p.gender == 'f'])
        with pytest.raises(LexiconError, match="masculine"):
            generate_gender_agreement(seed=0, count=5, lexicon=lexicon)


class TestPerturbationPairs:
    def test_first_instance_pairs_with_every_other(self):
        instances, templates = generate_number_agreement(seed=0, count=200)
        pairs = make_perturbation_pairs(templates, instances)
        by_template = {}
        for instance in instances:
            by_template.setdefault(instance.template_id, []).append(instance)
        assert len(pairs) == sum(len(members) - 1 for members in by_template.values())
        for pair in pairs:
            assert pair.first is by_template[pair.template_id][0]

    def test_three_instances_give_two_pairs(self):
        template = number_templates()[0]
        instances, _ = generate_number_agreement(seed=0, count=400)
        members = [i for i in instances if i.template_id == template.template_id][:3]
        assert len(members) == 3
        pairs = make_perturbation_pairs([template], members)
        assert [(p.first.id, p.second.id) for p in pairs] == [(members[0].id, members[1].id),
                                                               (members[0].id, members[2].id)]

    def test_members_share_length_and_annotation(self):
        instances, templates = generate_gender_agreement(seed=1, count=200)
        for pair in make_perturbation_pairs(templates, instances):
            assert len(pair.first.tokens) == len(pair.second.tokens)
            assert pair.first.cues == pair.second.cues
            assert pair.first.attractors == pair.second.attractors

    def test_substitution_preserving_example(self):
        nun = TestInstance(id='a', tokens='the nun bought the son a gift because'.split(), cues=[1], attractors=[4],
                           gold_tag='FEMININE', kind='gender', template_id='gift:F-M')
        woman = TestInstance(id='b', tokens='the woman bought the boy a gift because'.split(), cues=[1],
                             attractors=[4], gold_tag='FEMININE', kind='gender', template_id='gift:F-M')
        pair = PerturbationPair(first=nun, second=woman, template_id='gift:F-M')
        assert pair.first.tokens[1] == 'nun' and pair.second.tokens[1] == 'woman'

    def test_misaligned_pair_is_rejected(self):
        a = TestInstance(id='a', tokens=['the', 'author', 'near', 'the', 'pilots'], cues=[1], attractors=[4],
                         gold_tag='SINGULAR', kind='number', template_id='t')
        b = TestInstance(id='b', tokens=['the', 'pilots', 'near', 'the', 'author'], cues=[4], attractors=[1],
                         gold_tag='SINGULAR', kind='number', template_id='t')
        with pytest.raises(ValueError, match="positions differ"):
            PerturbationPair(first=a, second=b, template_id='t')

    def test_single_instance_template_yields_no_pairs(self):
        instances, templates = generate_number_agreement(seed=0, count=1)
        assert make_perturbation_pairs(templates, instances) == []

    def test_references_resolve_back_to_pairs(self):
        instances, templates = generate_number_agreement(seed=0, count=100)
        pairs = make_perturbation_pairs(templates, instances)
        assert resolve_pairs(pair_references(pairs), instances) == pairs

    def test_unknown_reference_is_an_error(self):
        instances, _ = generate_number_agreement(seed=0, count=5)
        with pytest.raises(ValueError, match="unknown instances"):
            resolve_pairs([PairReference(first=instances[0].id, second='missing', template_id='t')], instances)


def test_nearest_filter_keeps_attractor_closest_to_the_prediction():
    instances, _ = generate_number_agreement(seed=0, count=300)
    kept = filter_nearest_attractor(instances)
    assert kept
    for instance in kept:
        assert max(instance.attractors) > max(instance.cues)
    # the object-relative "within" constructions put the subject last
    assert not any(i.template_id.startswith('obj_rel_within') for i in kept)


def test_test_instance_rejects_overlapping_sets():
    with pytest.raises(ValueError, match="overlap"):
        TestInstance(id='x', tokens=['the', 'author'], cues=[1], attractors=[1], gold_tag='SINGULAR', kind='number')


def test_lm_corpus_sentences_end_in_eos_and_are_deterministic():
    corpus = generate_lm_corpus(seed=0, count=40)
    assert corpus == generate_lm_corpus(seed=0, count=40)
    assert len(corpus) == 40
    assert all(sentence[-1] == EOS for sentence in corpus)
    pronouns = [s[-2] for s in corpus if s[-3] == 'because']
    assert len(pronouns) == 20
    assert set(pronouns) <= {'he', 'she'}


class TestCueAttractorExtraction:
    def test_matching_and_conflicting_nouns(self):
        record = _tagged(['author', 'pilots', 'guard', 'is'], ['NN', 'NNS', 'NN', 'VBZ'],
                         ['sg', 'pl', 'sg', None], [None, None, None, 0])
        assert extract_cue_attractor(record, 3) == ([0, 2], [1])

    def test_no_conflicting_nouns_gives_empty_attractors(self):
        record = _tagged(['author', 'guard', 'smiles'], ['NN', 'NN', 'VBZ'], ['sg', 'sg', None], [None, None, 0])
        assert extract_cue_attractor(record, 2) == ([0, 1], [])

    def test_plural_verb(self):
        record = _tagged(['authors', 'near', 'the', 'guard', 'smile'], ['NNS', 'IN', 'DT', 'NN', 'VBP'],
                         ['pl', None, None, 'sg', None], [None, None, None, None, 0])
        assert extract_cue_attractor(record, 4) == ([0], [3])

    def test_unknown_verb_number_is_an_error(self):
        record = _tagged(['author', 'smiled'], ['NN', 'VBD'], ['sg', None], [None, 0])
        with pytest.raises(ValueError, match="no known verb number"):
            extract_cue_attractor(record, 1)


class TestPtbFilter:
    def test_accepts_a_prefix_meeting_all_criteria(self):
        record = _tagged(['the', 'author', 'near', 'the', 'pilots', 'is'], ['DT', 'NN', 'IN', 'DT', 'NNS', 'VBZ'],
                         [None, 'sg', None, None, 'pl', None], [None] * 5 + [1])
        [instance] = filter_ptb_style([record])
        assert instance.tokens == ['the', 'author', 'near', 'the', 'pilots']
        assert (instance.cues, instance.attractors, instance.gold_tag) == ([1], [4], 'SINGULAR')

    def test_verb_right_after_subject_is_rejected(self):
        record = _tagged(['the', 'pilots', 'said', 'the', 'author', 'is'], ['DT', 'NNS', 'VBD', 'DT', 'NN', 'VBZ'],
                         [None, 'pl', None, None, 'sg', None], [None] * 5 + [4])
        assert filter_ptb_style([record]) == []

    def test_prefix_without_attractor_is_rejected(self):
        record = _tagged(['the', 'author', 'near', 'the', 'guard', 'is'], ['DT', 'NN', 'IN', 'DT', 'NN', 'VBZ'],
                         [None, 'sg', None, None, 'sg', None], [None] * 5 + [1])
        assert filter_ptb_style([record]) == []

    @pytest.mark.parametrize('attractor, accepted', [(0, False), (2, True)])
    def test_attractor_distance_from_subject(self, attractor, accepted):
        tokens = ['x'] * 14
        pos = ['FW'] * 14
        nouns = [None] * 14
        tokens[attractor], pos[attractor], nouns[attractor] = 'pilots', 'NNS', 'pl'
        tokens[11], pos[11], nouns[11] = 'author', 'NN', 'sg'
        tokens[13], pos[13] = 'is', 'VBZ'
        record = _tagged(tokens, pos, nouns, [None] * 13 + [11])
        assert (11 - attractor >= ATTRACTOR_WINDOW) is not accepted
        assert bool(filter_ptb_style([record])) is accepted

    def test_long_subject_verb_distance_is_accepted(self):
        tokens = ['x'] * 16
        pos = ['FW'] * 16
        nouns = [None] * 16
        tokens[1], pos[1], nouns[1] = 'author', 'NN', 'sg'
        tokens[3], pos[3], nouns[3] = 'pilots', 'NNS', 'pl'
        tokens[15], pos[15] = 'is', 'VBZ'
        record = _tagged(tokens, pos, nouns, [None] * 15 + [1])
        assert 15 - 1 > ATTRACTOR_WINDOW
        [instance] = filter_ptb_style([record])
        assert (instance.cues, instance.attractors) == ([1], [3])

    def test_records_without_subjects_are_skipped(self):
        record = TaggedCorpusRecord(id='s', tokens=['author', 'pilots', 'x', 'is'], pos=['NN', 'NNS', 'FW', 'VBZ'],
                                    noun_number=['sg', 'pl', None, None])
        assert filter_ptb_style([record]) == []

    def test_every_output_rechecks_against_the_criteria(self):
        records = [
            _tagged(['the', 'author', 'near', 'the', 'pilots', 'is'], ['DT', 'NN', 'IN', 'DT', 'NNS', 'VBZ'],
                    [None, 'sg', None, None, 'pl', None], [None] * 5 + [1], record_id='a'),
            _tagged(['the', 'authors', 'that', 'the', 'guard', 'likes', 'are'],
                    ['DT', 'NNS', 'WDT', 'DT', 'NN', 'VBZ', 'VBP'],
                    [None, 'pl', None, None, 'sg', None, None], [None] * 5 + [4, 1], record_id='b'),
        ]
        instances = filter_ptb_style(records)
        assert [i.id for i in instances] == ['a:5', 'b:6']
        for instance, record in zip(instances, records):
            position = len(instance.tokens)
            subject = record.subject_index[position]
            assert passes_ptb_criteria(subject, position, instance.attractors)

    def test_mismatched_arrays_are_rejected(self):
        with pytest.raises(ValueError, match="do not match"):
            TaggedCorpusRecord(id='s', tokens=['a', 'b'], pos=['DT'], noun_number=[None, None])
