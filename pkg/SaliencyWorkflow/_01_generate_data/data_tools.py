"""
Tools for the data generation stage.

Synthetic number- and gender-agreement test sets built from templates,
interpretation-preserving perturbation pairs, the toy LM corpus, and the
PTB-style filter for user-supplied pre-tagged corpora.
"""

from collections import OrderedDict
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from BaseMachine.logger import get_logger

logger = get_logger(__name__)

AgreementKind = Literal['number', 'gender']

NUMBER_TAGS = ('SINGULAR', 'PLURAL')
GENDER_TAGS = ('FEMININE', 'MASCULINE')
TAGS = {'number': NUMBER_TAGS, 'gender': GENDER_TAGS}

EOS = '<eos>'

# surface-token distance from an attractor back to the subject at which it stops counting
ATTRACTOR_WINDOW = 10

PRESENT_VERB_TAGS = {'VBZ': 'sg', 'VBP': 'pl'}
COPULA_NUMBER = {'is': 'sg', 'are': 'pl', 'was': 'sg', 'were': 'pl'}
NUMBER_TAG = {'sg': 'SINGULAR', 'pl': 'PLURAL'}
GENDER_TAG = {'f': 'FEMININE', 'm': 'MASCULINE'}
PRONOUN = {'f': 'she', 'm': 'he'}


class LexiconError(ValueError):
    """A lexicon lacks the words a generator needs."""


# ----------------------------------------------------------------------------
# Records
# ----------------------------------------------------------------------------

class TestInstance(BaseModel):
    __test__ = False

    id: str = Field(description="Unique instance id")
    tokens: List[str] = Field(description="Prefix tokens, ending right before the predicted word")
    cues: List[int] = Field(description="Positions whose agreement feature matches the gold tag")
    attractors: List[int] = Field(description="Positions with the conflicting agreement feature")
    gold_tag: str = Field(description="Gold agreement tag")
    kind: AgreementKind = Field(description="Agreement kind")
    template_id: Optional[str] = Field(None, description="Template the instance was generated from")

    @model_validator(mode='after')
    def _check_sets(self):
        if not self.tokens:
            raise ValueError("instance prefix must not be empty")
        if set(self.cues) & set(self.attractors):
            raise ValueError(f"cue and attractor sets overlap: {sorted(set(self.cues) & set(self.attractors))}")
        for position in self.cues + self.attractors:
            if not 0 <= position < len(self.tokens):
                raise ValueError(f"annotated position {position} outside prefix of length {len(self.tokens)}")
        if self.gold_tag not in TAGS[self.kind]:
            raise ValueError(f"gold tag {self.gold_tag!r} is not a {self.kind} tag")
        return self

    @property
    def gold_class(self) -> int:
        return TAGS[self.kind].index(self.gold_tag)


class Template(BaseModel):
    template_id: str = Field(description="Template id, also its perturbation group")
    kind: AgreementKind = Field(description="Agreement kind")
    pattern: List[str] = Field(description="Literal tokens and '{slot}' references")
    cue_slot: str = Field(description="Slot holding the cue")
    attractor_slot: str = Field(description="Slot holding the attractor")
    gold_tag: str = Field(description="Gold tag of every instantiation")
    completion: Literal['intransitive', 'transitive', 'pronoun'] = Field(
        description="Word class that continues the prefix in the LM corpus")
    completion_slot: str = Field(description="Slot the continuation agrees with")

    @property
    def perturbation_group(self) -> str:
        return self.template_id

    def position(self, slot: str) -> int:
        return self.pattern.index('{' + slot + '}')


class PerturbationPair(BaseModel):
    first: TestInstance = Field(description="First instance of the template")
    second: TestInstance = Field(description="Another instance of the same template")
    template_id: str = Field(description="Shared template id")

    @model_validator(mode='after')
    def _check_alignment(self):
        a, b = self.first, self.second
        if len(a.tokens) != len(b.tokens):
            raise ValueError(f"pair {a.id}/{b.id}: prefix lengths differ ({len(a.tokens)} vs {len(b.tokens)})")
        if sorted(a.cues) != sorted(b.cues) or sorted(a.attractors) != sorted(b.attractors):
            raise ValueError(f"pair {a.id}/{b.id}: cue/attractor positions differ")
        if a.gold_tag != b.gold_tag:
            raise ValueError(f"pair {a.id}/{b.id}: gold tags differ")
        if a.template_id != self.template_id or b.template_id != self.template_id:
            raise ValueError(f"pair {a.id}/{b.id}: members do not come from template {self.template_id}")
        return self


class PairReference(BaseModel):
    """On-disk form of a perturbation pair: instance ids only."""

    first: str = Field(description="Id of the first instance")
    second: str = Field(description="Id of the second instance")
    template_id: str = Field(description="Shared template id")


class TaggedCorpusRecord(BaseModel):
    id: str = Field(description="Sentence id")
    tokens: List[str] = Field(description="Sentence tokens")
    pos: List[str] = Field(description="Penn-style POS tag per token")
    noun_number: List[Optional[Literal['sg', 'pl']]] = Field(description="Morphological number per noun, null elsewhere")
    subject_index: Optional[List[Optional[int]]] = Field(
        None, description="Grammatical-subject position per verb, null elsewhere")

    @model_validator(mode='after')
    def _check_parallel(self):
        n = len(self.tokens)
        lengths = {'pos': len(self.pos), 'noun_number': len(self.noun_number)}
        if self.subject_index is not None:
            lengths['subject_index'] = len(self.subject_index)
        bad = {k: v for k, v in lengths.items() if v != n}
        if bad:
            raise ValueError(f"record {self.id}: arrays {bad} do not match {n} tokens")
        return self


class CorpusSentence(BaseModel):
    tokens: List[str] = Field(description="Sentence tokens, ending in <eos>")


# ----------------------------------------------------------------------------
# Lexicons
# ----------------------------------------------------------------------------

class NounEntry(BaseModel):
    word: str
    number: Literal['sg', 'pl']
    animate: bool = True


class VerbEntry(BaseModel):
    singular: str
    plural: str

    def form(self, number: str) -> str:
        return self.singular if number == 'sg' else self.plural


class PersonEntry(BaseModel):
    word: str
    gender: Literal['f', 'm']


def _noun_pairs(pairs: Iterable[Tuple[str, str]], animate: bool) -> List[NounEntry]:
    entries = []
    for singular, plural in pairs:
        entries.append(NounEntry(word=singular, number='sg', animate=animate))
        entries.append(NounEntry(word=plural, number='pl', animate=animate))
    return entries


class NumberLexicon(BaseModel):
    nouns: List[NounEntry] = Field(description="Nouns with number and animacy")
    transitive_verbs: List[VerbEntry] = Field(description="Transitive verbs (3rd-singular, plural)")
    intransitive_verbs: List[VerbEntry] = Field(description="Intransitive verbs and copulas continuing a subject")
    prepositions: List[str] = Field(description="Single-token prepositions")

    def nouns_for(self, number: str, animate: bool) -> List[str]:
        return [n.word for n in self.nouns if n.number == number and n.animate == animate]


class GenderLexicon(BaseModel):
    persons: List[PersonEntry] = Field(description="Unambiguously gendered person nouns")

    def persons_for(self, gender: str) -> List[str]:
        return [p.word for p in self.persons if p.gender == gender]


DEFAULT_NUMBER_LEXICON = NumberLexicon(
    nouns=_noun_pairs([
        ('author', 'authors'), ('pilot', 'pilots'), ('surgeon', 'surgeons'), ('farmer', 'farmers'),
        ('manager', 'managers'), ('customer', 'customers'), ('officer', 'officers'), ('teacher', 'teachers'),
        ('senator', 'senators'), ('consultant', 'consultants'), ('parent', 'parents'), ('guard', 'guards'),
        ('dancer', 'dancers'), ('architect', 'architects'), ('skater', 'skaters'), ('mechanic', 'mechanics'),
        ('executive', 'executives'), ('minister', 'ministers'),
    ], animate=True) + _noun_pairs([
        ('movie', 'movies'), ('book', 'books'), ('game', 'games'), ('song', 'songs'),
        ('painting', 'paintings'), ('picture', 'pictures'), ('car', 'cars'), ('table', 'tables'),
    ], animate=False),
    transitive_verbs=[VerbEntry(singular=s, plural=p) for s, p in [
        ('loves', 'love'), ('likes', 'like'), ('hates', 'hate'), ('admires', 'admire'),
        ('knows', 'know'), ('hires', 'hire'), ('meets', 'meet'),
    ]],
    intransitive_verbs=[VerbEntry(singular=s, plural=p) for s, p in [
        ('is', 'are'), ('was', 'were'), ('laughs', 'laugh'), ('smiles', 'smile'), ('swims', 'swim'),
    ]],
    prepositions=['near', 'behind', 'beside'],
)

DEFAULT_GENDER_LEXICON = GenderLexicon(persons=[
    PersonEntry(word=w, gender=g)
    for f, m in [
        ('bride', 'groom'), ('woman', 'man'), ('girl', 'boy'), ('mother', 'father'), ('daughter', 'son'),
        ('nun', 'monk'), ('queen', 'king'), ('sister', 'brother'), ('aunt', 'uncle'), ('wife', 'husband'),
        ('actress', 'actor'), ('waitress', 'waiter'), ('princess', 'prince'), ('niece', 'nephew'),
    ]
    for w, g in ((f, 'f'), (m, 'm'))
])

# construction -> (pattern, cue/subject slot, attractor slot, completion class)
NUMBER_CONSTRUCTIONS: Dict[str, Tuple[List[str], str, str, str]] = OrderedDict([
    ('sent_comp', (['the', '{attr}', 'said', 'the', '{subj}'], 'subj', 'attr', 'intransitive')),
    ('prep_anim', (['the', '{subj}', '{prep}', 'the', '{attr}'], 'subj', 'attr', 'intransitive')),
    ('prep_inanim', (['the', '{subj}', '{prep}', 'the', '{attr_inanim}'], 'subj', 'attr_inanim', 'intransitive')),
    ('subj_rel', (['the', '{subj}', 'that', '{verb_subj}', 'the', '{attr}'], 'subj', 'attr', 'intransitive')),
    ('obj_rel_across_anim', (['the', '{subj}', 'that', 'the', '{attr}', '{verb_attr}'], 'subj', 'attr', 'intransitive')),
    ('obj_rel_across_inanim', (['the', '{subj_inanim}', 'that', 'the', '{attr}', '{verb_attr}'],
                               'subj_inanim', 'attr', 'intransitive')),
    ('obj_rel_no_comp_across_anim', (['the', '{subj}', 'the', '{attr}', '{verb_attr}'], 'subj', 'attr', 'intransitive')),
    ('obj_rel_no_comp_across_inanim', (['the', '{subj_inanim}', 'the', '{attr}', '{verb_attr}'],
                                       'subj_inanim', 'attr', 'intransitive')),
    ('obj_rel_within_anim', (['the', '{attr}', 'that', 'the', '{subj}'], 'subj', 'attr', 'transitive')),
    ('obj_rel_within_inanim', (['the', '{attr_inanim}', 'that', 'the', '{subj}'], 'subj', 'attr_inanim', 'transitive')),
    ('obj_rel_no_comp_within_anim', (['the', '{attr}', 'the', '{subj}'], 'subj', 'attr', 'transitive')),
    ('obj_rel_no_comp_within_inanim', (['the', '{attr_inanim}', 'the', '{subj}'], 'subj', 'attr_inanim', 'transitive')),
])

# two-entity frames; e1 is the grammatical subject
GENDER_FRAMES: Dict[str, List[str]] = OrderedDict([
    ('examine', ['the', '{e1}', 'examined', 'the', '{e2}', 'for', 'injuries', 'because']),
    ('gift', ['the', '{e1}', 'bought', 'the', '{e2}', 'a', 'gift', 'because']),
    ('call', ['the', '{e1}', 'called', 'the', '{e2}', 'because']),
    ('thank', ['the', '{e1}', 'thanked', 'the', '{e2}', 'because']),
    ('visit', ['the', '{e1}', 'visited', 'the', '{e2}', 'at', 'home', 'because']),
    ('hug', ['the', '{e1}', 'hugged', 'the', '{e2}', 'because']),
    ('warn', ['the', '{e1}', 'warned', 'the', '{e2}', 'about', 'the', 'storm', 'because']),
    ('help', ['the', '{e1}', 'helped', 'the', '{e2}', 'because']),
    ('praise', ['the', '{e1}', 'praised', 'the', '{e2}', 'loudly', 'because']),
    ('follow', ['the', '{e1}', 'followed', 'the', '{e2}', 'home', 'because']),
])

_OTHER_NUMBER = {'sg': 'pl', 'pl': 'sg'}
_OTHER_GENDER = {'f': 'm', 'm': 'f'}


def number_templates() -> List[Template]:
    """One template per (construction, subject number, attractor number); numbers always differ."""
    templates = []
    for construction, (pattern, subj_slot, attr_slot, completion) in NUMBER_CONSTRUCTIONS.items():
        for subj_number in ('sg', 'pl'):
            attr_number = _OTHER_NUMBER[subj_number]
            templates.append(Template(
                template_id=f'{construction}:{subj_number}-{attr_number}',
                kind='number',
                pattern=pattern,
                cue_slot=subj_slot,
                attractor_slot=attr_slot,
                gold_tag=NUMBER_TAG[subj_number],
                completion=completion,
                completion_slot=subj_slot,
            ))
    return templates


def gender_templates(expected: Literal['feminine', 'subject'] = 'feminine') -> List[Template]:
    """One template per (frame, gender order); 'F-M' means the subject is feminine."""
    templates = []
    for frame, pattern in GENDER_FRAMES.items():
        for subj_gender in ('f', 'm'):
            order = f'{subj_gender.upper()}-{_OTHER_GENDER[subj_gender].upper()}'
            if expected == 'feminine':
                cue = 'e1' if subj_gender == 'f' else 'e2'
                gold = 'FEMININE'
            else:
                cue = 'e1'
                gold = GENDER_TAG[subj_gender]
            templates.append(Template(
                template_id=f'{frame}:{order}',
                kind='gender',
                pattern=pattern,
                cue_slot=cue,
                attractor_slot='e2' if cue == 'e1' else 'e1',
                gold_tag=gold,
                completion='pronoun',
                completion_slot=cue,
            ))
    return templates


def _require(words: Sequence[str], minimum: int, what: str) -> None:
    if len(words) < minimum:
        raise LexiconError(f"lexicon needs at least {minimum} {what}, found {len(words)}")


def _validate_number_lexicon(lexicon: NumberLexicon) -> None:
    for number in ('sg', 'pl'):
        _require(lexicon.nouns_for(number, True), 2, f"animate {NUMBER_TAG[number].lower()} nouns")
        _require(lexicon.nouns_for(number, False), 1, f"inanimate {NUMBER_TAG[number].lower()} nouns")
    _require(lexicon.transitive_verbs, 1, "transitive verbs")
    _require(lexicon.intransitive_verbs, 1, "intransitive verbs")
    _require(lexicon.prepositions, 1, "prepositions")


def _validate_gender_lexicon(lexicon: GenderLexicon) -> None:
    _require(lexicon.persons_for('f'), 1, "feminine person nouns")
    _require(lexicon.persons_for('m'), 1, "masculine person nouns")


def _pick(rng: np.random.Generator, words: Sequence[str]) -> str:
    return words[int(rng.integers(len(words)))]


def _fill_number(template: Template, lexicon: NumberLexicon, rng: np.random.Generator) -> List[str]:
    subj_number = 'sg' if template.gold_tag == 'SINGULAR' else 'pl'
    numbers = {'subj': subj_number, 'attr': _OTHER_NUMBER[subj_number]}
    tokens = []
    for token in template.pattern:
        if not token.startswith('{'):
            tokens.append(token)
            continue
        slot = token[1:-1]
        if slot == 'prep':
            tokens.append(_pick(rng, lexicon.prepositions))
        elif slot.startswith('verb_'):
            tokens.append(_pick(rng, lexicon.transitive_verbs).form(numbers[slot[len('verb_'):]]))
        else:
            role, _, animacy = slot.partition('_')
            tokens.append(_pick(rng, lexicon.nouns_for(numbers[role], animate=animacy != 'inanim')))
    return tokens


def _instance(template: Template, tokens: List[str], instance_id: str) -> TestInstance:
    return TestInstance(
        id=instance_id,
        tokens=tokens,
        cues=[template.position(template.cue_slot)],
        attractors=[template.position(template.attractor_slot)],
        gold_tag=template.gold_tag,
        kind=template.kind,
        template_id=template.template_id,
    )


def generate_number_agreement(seed: int, count: int,
                              lexicon: NumberLexicon = DEFAULT_NUMBER_LEXICON
                              ) -> Tuple[List[TestInstance], List[Template]]:
    """Instances drawn uniformly over the number templates; one cue (the subject) and one attractor each."""
    _validate_number_lexicon(lexicon)
    templates = number_templates()
    rng = np.random.default_rng([seed, 0])
    instances = []
    for i in range(count):
        template = templates[int(rng.integers(len(templates)))]
        instances.append(_instance(template, _fill_number(template, lexicon, rng), f'number-{seed}-{i:05d}'))
    return instances, templates


def generate_gender_agreement(seed: int, count: int,
                              lexicon: GenderLexicon = DEFAULT_GENDER_LEXICON,
                              expected: Literal['feminine', 'subject'] = 'feminine',
                              ) -> Tuple[List[TestInstance], List[Template]]:
    """
    Two-entity prefixes ending before a pronoun.

    Both entities are drawn from the whole person lexicon; draws where the
    two share a gender are excluded. With expected='feminine' the feminine
    entity is always the cue; with expected='subject' the subject is.
    """
    _validate_gender_lexicon(lexicon)
    templates = gender_templates(expected)
    by_id = {t.template_id: t for t in templates}
    frames = list(GENDER_FRAMES)
    genders = {p.word: p.gender for p in lexicon.persons}
    words = [p.word for p in lexicon.persons]

    rng = np.random.default_rng([seed, 1])
    instances: List[TestInstance] = []
    excluded = 0
    while len(instances) < count:
        frame = frames[int(rng.integers(len(frames)))]
        e1, e2 = _pick(rng, words), _pick(rng, words)
        if genders[e1] == genders[e2]:
            excluded += 1
            continue
        order = f'{genders[e1].upper()}-{genders[e2].upper()}'
        template = by_id[f'{frame}:{order}']
        tokens = [{'{e1}': e1, '{e2}': e2}.get(t, t) for t in template.pattern]
        instances.append(_instance(template, tokens, f'gender-{seed}-{len(instances):05d}'))
    logger.debug(f"Gender generation excluded {excluded} same-gender draws")
    return instances, templates


def make_perturbation_pairs(templates: Sequence[Template], instances: Sequence[TestInstance]) -> List[PerturbationPair]:
    """Pair the first instance of each template with every later instance of it."""
    groups: Dict[str, List[TestInstance]] = OrderedDict((t.template_id, []) for t in templates)
    for instance in instances:
        if instance.template_id in groups:
            groups[instance.template_id].append(instance)
    pairs = []
    for template_id, members in groups.items():
        for other in members[1:]:
            pairs.append(PerturbationPair(first=members[0], second=other, template_id=template_id))
    return pairs


def resolve_pairs(references: Sequence[PairReference], instances: Sequence[TestInstance]) -> List[PerturbationPair]:
    by_id = {i.id: i for i in instances}
    missing = [r for r in references if r.first not in by_id or r.second not in by_id]
    if missing:
        raise ValueError(f"{len(missing)} pair(s) reference unknown instances, first: {missing[0]}")
    return [PerturbationPair(first=by_id[r.first], second=by_id[r.second], template_id=r.template_id)
            for r in references]


def pair_references(pairs: Sequence[PerturbationPair]) -> List[PairReference]:
    return [PairReference(first=p.first.id, second=p.second.id, template_id=p.template_id) for p in pairs]


def filter_nearest_attractor(instances: Sequence[TestInstance]) -> List[TestInstance]:
    """Keep instances whose annotated position closest to the prediction point is an attractor."""
    kept = []
    for instance in instances:
        if instance.attractors and max(instance.cues + instance.attractors) in instance.attractors:
            kept.append(instance)
    return kept


# ----------------------------------------------------------------------------
# LM corpus
# ----------------------------------------------------------------------------

def completion_word(template: Template, instance: TestInstance, number_lexicon: NumberLexicon,
                    gender_lexicon: GenderLexicon, rng: np.random.Generator) -> str:
    """A continuation that agrees with the template's completion slot."""
    slot_token = instance.tokens[template.position(template.completion_slot)]
    if template.completion == 'pronoun':
        genders = {p.word: p.gender for p in gender_lexicon.persons}
        return PRONOUN[genders[slot_token]]
    number = 'sg' if instance.gold_tag == 'SINGULAR' else 'pl'
    verbs = number_lexicon.transitive_verbs if template.completion == 'transitive' else number_lexicon.intransitive_verbs
    return _pick(rng, verbs).form(number)


def generate_lm_corpus(seed: int, count: int,
                       number_lexicon: NumberLexicon = DEFAULT_NUMBER_LEXICON,
                       gender_lexicon: GenderLexicon = DEFAULT_GENDER_LEXICON) -> List[List[str]]:
    """
    Training sentences for the toy LMs: template prefixes completed with an
    agreeing word and <eos>. Half number agreement, half gender agreement
    (pronoun agrees with the grammatical subject).
    """
    n_number = count // 2
    number, number_tpl = generate_number_agreement(seed, n_number, number_lexicon)
    gender, gender_tpl = generate_gender_agreement(seed, count - n_number, gender_lexicon, expected='subject')
    templates = {t.template_id: t for t in number_tpl + gender_tpl}
    rng = np.random.default_rng([seed, 2])

    sentences = []
    for instance in _interleave(number, gender):
        template = templates[instance.template_id]
        word = completion_word(template, instance, number_lexicon, gender_lexicon, rng)
        sentences.append(instance.tokens + [word, EOS])
    return sentences


def _interleave(a: Sequence, b: Sequence) -> List:
    merged = []
    for i in range(max(len(a), len(b))):
        merged.extend(x[i] for x in (a, b) if i < len(x))
    return merged


def corpus_words(sentences: Iterable[Sequence[str]]) -> List[str]:
    return sorted({token for sentence in sentences for token in sentence})


# ----------------------------------------------------------------------------
# PTB-style filtering of pre-tagged natural data
# ----------------------------------------------------------------------------

def verb_number(record: TaggedCorpusRecord, position: int) -> Optional[str]:
    token = record.tokens[position].lower()
    if token in COPULA_NUMBER:
        return COPULA_NUMBER[token]
    return PRESENT_VERB_TAGS.get(record.pos[position])


def extract_cue_attractor(record: TaggedCorpusRecord, verb_position: int) -> Tuple[List[int], List[int]]:
    """Nouns before the verb split by whether their number matches the verb's."""
    number = verb_number(record, verb_position)
    if number is None:
        raise ValueError(f"record {record.id}: token {verb_position} ({record.tokens[verb_position]!r}) "
                         f"has no known verb number")
    cues, attractors = [], []
    for position in range(verb_position):
        noun = record.noun_number[position]
        if noun is None:
            continue
        (cues if noun == number else attractors).append(position)
    return cues, attractors


def passes_ptb_criteria(subject: int, verb_position: int, attractors: Sequence[int]) -> bool:
    if not attractors:
        return False
    if verb_position - subject <= 1:
        return False
    return not all(subject - a >= ATTRACTOR_WINDOW for a in attractors)


def filter_ptb_style(records: Sequence[TaggedCorpusRecord]) -> List[TestInstance]:
    """
    One instance per present-tense verb or copula passing the three criteria:
    at least one attractor, the verb does not immediately follow its subject,
    and not every attractor lies ATTRACTOR_WINDOW or more tokens before the subject.
    """
    instances = []
    skipped_records = 0
    skipped_verbs = 0
    for record in records:
        if record.subject_index is None or all(s is None for s in record.subject_index):
            skipped_records += 1
            continue
        for position in range(len(record.tokens)):
            number = verb_number(record, position)
            if number is None:
                continue
            subject = record.subject_index[position]
            if subject is None or not 0 <= subject < position:
                skipped_verbs += 1
                continue
            cues, attractors = extract_cue_attractor(record, position)
            if not passes_ptb_criteria(subject, position, attractors):
                continue
            instances.append(TestInstance(
                id=f'{record.id}:{position}',
                tokens=record.tokens[:position],
                cues=cues,
                attractors=attractors,
                gold_tag=NUMBER_TAG[number],
                kind='number',
            ))
    if skipped_records:
        logger.warning(f"Skipped {skipped_records} tagged record(s) without subject indices")
    if skipped_verbs:
        logger.warning(f"Skipped {skipped_verbs} verb(s) without a usable subject index")
    return instances
