#!/usr/bin/env python3
import sys
from pathlib import Path

import pytest

# Make project root importable
PROJECT_ROOT = Path(__file__).parent.parent.resolve()
sys.path.insert(0, str(PROJECT_ROOT))

from core.config_schema import RunConfig
from diagnostics.bias_probes import BiasProbe
from diagnostics.criteria import is_correct, is_fact_completion
from diagnostics.popularity import TsvPopularity
from diagnostics.relations import SubstitutionTable, TemplateStore
from engine.runner import Prediction
from helpers import PatternRunner, print_header
from scenarios.builders import (
    CorpusExhaustedError,
    DisjointnessError,
    ScenarioSample,
    SplitTooSmallError,
    answer_sets,
    assemble_dataset,
    build_exact_fact,
    build_generic,
    build_guesswork,
    build_heuristics,
    check_disjoint,
    generic_candidate,
)
from scenarios.classify import UNCLASSIFIED, classify
from scenarios.dataset_io import (
    CorpusEntry,
    FactTuple,
    MissingInputError,
    load_fact_tuples,
    read_dataset,
    write_dataset,
    write_fact_tuples,
)
from scenarios.entity_check import LabelSetChecker, WikidataChecker
from scenarios.synthetic_names import (
    NameGenerationError,
    NameGenerator,
    SyntheticSubject,
    generate_synthetic_subjects,
    style_distribution,
)

FACTS = [
    FactTuple("P495", "Blorbix", "Japan"),
    FactTuple("P495", "Zanthor", "France"),
    FactTuple("P27", "Pierre Dupont", "Russia"),
]


@pytest.fixture(scope="module")
def store():
    return TemplateStore.load()


@pytest.fixture(scope="module")
def substitutions():
    return SubstitutionTable.load()


def _config(**overrides) -> RunConfig:
    return RunConfig(**overrides)


# --- guesswork ---

def test_guesswork_keeps_single_template_hits(store):
    print_header("Guesswork")
    runner = PatternRunner([(r"^Blorbix was created in$", ["Japan"])])
    popularity = TsvPopularity({"Blorbix": 10, "Zanthor": 5000})
    result = build_guesswork(FACTS, store, runner, popularity, _config(relations=["P495"]))
    assert len(result.samples) == 1
    sample = result.samples[0]
    assert (sample.scenario, sample.template_id, sample.gold) == ("guesswork", 0, "Japan")
    assert sample.prediction.token_text == "Japan"
    assert sample.confidence_count == 1
    assert sample.popularity == 10
    assert result.rejections["popular_subject"] == 1
    assert result.rejections["trivial_prediction"] == 3


def test_guesswork_rejects_repeated_guess(store):
    runner = PatternRunner([(r"^Blorbix(,)? (that )?was created in$", ["Japan"])])
    popularity = TsvPopularity({"Blorbix": 10})
    result = build_guesswork(FACTS[:1], store, runner, popularity, _config(relations=["P495"]))
    assert result.samples == []
    assert result.rejections["count_not_one"] == 1


# --- exact fact ---

def _exact(store, substitutions, rules, gold="France", views=5000):
    runner = PatternRunner(rules)
    facts = [FactTuple("P495", "Zanthor", gold)]
    answers = answer_sets(facts + [FactTuple("P495", "Other", "France")])
    probe = BiasProbe(runner, substitutions)
    return build_exact_fact(facts, store, runner, TsvPopularity({"Zanthor": views}), probe,
                            _config(relations=["P495"]), answers)


def test_exact_fact_one_sample_per_template(store, substitutions):
    print_header("Exact fact")
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"])])
    assert len(result.samples) == 16
    assert {s.template_id for s in result.samples} == set(range(16))
    assert all(s.confidence_count == 16 and s.bias_tags == () for s in result.samples)
    assert result.rejections["trivial_prediction"] == 2


def test_exact_fact_rejects_prompt_bias(store, substitutions):
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"]), (r"^It", ["France"])])
    assert result.samples == []
    assert result.rejections["biased"] == 16


def test_exact_fact_rejects_wrong_answer(store, substitutions):
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"])], gold="Germany")
    assert result.samples == []
    assert result.rejections["incorrect"] == 16


def test_exact_fact_needs_confidence_and_popularity(store, substitutions):
    few = [(rf"^Zanthor{tail}", ["France"]) for tail in (" was created in$", ", that was created in$",
                                                            ", created in$", " is from$")]
    result = _exact(store, substitutions, few)
    assert result.rejections["not_confident"] >= 1
    assert result.samples == []
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"])], views=1000)
    assert result.rejections["unpopular_subject"] == 1
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"])], views=1001)
    assert len(result.samples) == 16


def test_exact_fact_counts_templates_left_after_filters(store, substitutions):
    print_header("Exact fact after filters")
    # "It ..." answers France on 13 of the 16 templates; three clean hits remain
    cue = (r"^It(?! was created in$|, that was created in$|, created in$)", ["France"])
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"]), cue])
    assert result.samples == []
    assert result.rejections["biased"] == 13
    assert result.rejections["not_confident_after_filter"] == 1

    cue = (r"^It.*(formulated|from|developed)", ["France"])
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"]), cue])
    assert {s.template_id for s in result.samples} == set(range(8))
    assert all(s.confidence_count == 8 for s in result.samples)
    assert result.rejections["biased"] == 8


@pytest.mark.parametrize("clean_templates, kept", [
    (r"(,)? (that )?(was )?created in$|, that originated in$", 0),
    (r"(,)? (that )?(was )?(created|originated) in$", 5),
])
def test_exact_fact_confidence_boundary_after_filters(store, substitutions, clean_templates, kept):
    cue = (rf"^It(?!{clean_templates})", ["France"])
    result = _exact(store, substitutions, [(r"^Zanthor", ["France"]), cue])
    assert len(result.samples) == kept
    assert all(s.confidence_count == 5 for s in result.samples)


def test_exact_fact_gold_prefix_boundary(store, substitutions):
    rules = [(r"^Zanthor", ["Fran"])]
    runner = PatternRunner(rules)
    facts = [FactTuple("P495", "Zanthor", "France")]
    answers = {"P495": {"France", "Fran", "Fra"}}
    probe = BiasProbe(runner, substitutions)
    result = build_exact_fact(facts, store, runner, TsvPopularity({"Zanthor": 5000}), probe,
                              _config(relations=["P495"]), answers)
    assert len(result.samples) == 16

    runner = PatternRunner([(r"^Zanthor", ["Fra"])])
    result = build_exact_fact(facts, store, runner, TsvPopularity({"Zanthor": 5000}),
                              BiasProbe(runner, substitutions), _config(relations=["P495"]), answers)
    assert result.samples == []
    assert result.rejections["incorrect"] == 16


# --- heuristics ---

# template prompts only, not the name probes that also start with the subject
TEMPLATE_PROMPTS = r"^Ivan Petrov(?!.*common name)"


def _heuristics(store, substitutions, rules):
    runner = PatternRunner(rules)
    probe = BiasProbe(runner, substitutions)
    subjects = [("P27", SyntheticSubject("Ivan Petrov", "russian"))]
    return build_heuristics(subjects, store, runner, probe, _config(), answer_sets(FACTS))


def test_heuristics_single_name_cue(store, substitutions):
    print_header("Heuristics")
    result = _heuristics(store, substitutions, [(r"common name", ["Russia"]), (TEMPLATE_PROMPTS, ["Russia"])])
    assert len(result.samples) == 7
    assert all(s.bias_tags == ("name",) and s.style == "russian" for s in result.samples)
    assert all(s.gold is None and s.popularity == 0 for s in result.samples)
    assert result.side_channel == []


def test_heuristics_without_cue_goes_to_side_channel(store, substitutions):
    result = _heuristics(store, substitutions, [(TEMPLATE_PROMPTS, ["Russia"])])
    assert result.samples == []
    assert len(result.side_channel) == 7
    assert result.rejections["no_bias"] == 7


def test_heuristics_multiple_cues_rejected(store, substitutions):
    rules = [(r"common name", ["Russia"]), (r"^He\b", ["Russia"]), (TEMPLATE_PROMPTS, ["Russia"])]
    result = _heuristics(store, substitutions, rules)
    assert result.samples == []
    assert result.rejections["multiple_bias"] == 7


def test_heuristics_counts_single_cue_templates_only(store, substitutions):
    # "holds"/"has" templates also carry a prompt cue, leaving four single-cue templates
    holds_or_has = (r"^(He|She)(, who)? holds|^(He|She) has", ["Russia"])
    rules = [(r"common name", ["Russia"]), holds_or_has, (TEMPLATE_PROMPTS, ["Russia"])]
    result = _heuristics(store, substitutions, rules)
    assert result.samples == []
    assert result.rejections["multiple_bias"] == 3
    assert result.rejections["not_confident_after_filter"] == 1

    holds = (r"^(He|She)(, who)? holds", ["Russia"])
    result = _heuristics(store, substitutions, [(r"common name", ["Russia"]), holds, (TEMPLATE_PROMPTS, ["Russia"])])
    assert {s.template_id for s in result.samples} == {0, 1, 2, 4, 6}
    assert all(s.confidence_count == 5 and s.bias_tags == ("name",) for s in result.samples)
    assert result.rejections["multiple_bias"] == 2


# --- classifier ---

@pytest.mark.parametrize("row, expected", [
    ((False, None, None, [], None), "generic"),
    ((True, 1, 10, [], False), "guesswork"),
    ((True, 1, None, ["name"], None), "guesswork"),
    ((True, 5, 1001, [], True), "exact_fact"),
    ((True, 5, 1000, ["name"], None), "heuristics"),
    ((True, 9, 0, ["prompt"], None), "heuristics"),
    ((True, 4, 5000, [], True), UNCLASSIFIED),
    ((True, 5, 1001, ["name"], True), UNCLASSIFIED),
    ((True, 5, 1001, [], False), UNCLASSIFIED),
    ((True, 6, 10, ["name", "prompt"], None), UNCLASSIFIED),
    ((True, 1, 5000, [], True), UNCLASSIFIED),
])
def test_classify_decision_table(row, expected):
    assert classify(*row) == expected


GOLDEN_ANSWERS = {
    "P19": {"Ohio", "Philadelphia"},
    "P27": {"Ukraine", "Canada", "Singapore"},
    "P495": {"Russia", "Berlin", "Japan"},
}


@pytest.mark.parametrize("prompt, relation_id, prediction, gold, conf, views, tags, expected", [
    ("Nara also enjoyed success in", None, "the", "singles", None, None, [], "generic"),
    ("Benjamin later joined a number of", None, "other", "clubs", None, None, [], "generic"),
    ("Sonar Kollektiv originated in", "P495", "Russia", "Berlin", 1, 215, [], "guesswork"),
    ("Joseph Clay was originally from", "P19", "Ohio", "Philadelphia", 1, 273, [], "guesswork"),
    ("Serok Nuvrome, a citizen of", "P27", "Ukraine", None, 6, 0, ["name"], "heuristics"),
    ("Balo Windhair has a citizenship of", "P27", "Canada", None, 5, 0, ["prompt"], "heuristics"),
    ("Thomas Ong is a citizen of", "P27", "Singapore", "Singapore", 7, 1418, [], "exact_fact"),
    ("Shibuya-kei, that was created in", "P495", "Japan", "Japan", 8, 5933, [], "exact_fact"),
])
def test_classify_golden_rows(prompt, relation_id, prediction, gold, conf, views, tags, expected):
    p = Prediction(prediction, 1, 0.5)
    completion = any(is_fact_completion(rel, p, answers) for rel, answers in GOLDEN_ANSWERS.items())
    assert completion == (relation_id is not None)
    correct = is_correct(prediction, gold) if gold and relation_id else None
    assert classify(completion, conf, views, tags, correct) == expected


def _golden_exact(store, substitutions, relation_id, subject, obj, views, rule):
    runner = PatternRunner([rule])
    facts = [FactTuple(relation_id, subject, obj)]
    return build_exact_fact(facts, store, runner, TsvPopularity({subject: views}), BiasProbe(runner, substitutions),
                            _config(relations=[relation_id]), answer_sets(facts))


def test_golden_exact_fact_rows(store, substitutions):
    print_header("Golden rows")
    result = _golden_exact(store, substitutions, "P27", "Thomas Ong", "Singapore", 1418,
                           (r"^Thomas Ong(?!.*common name)", ["Singapore"]))
    assert len(result.samples) == 7
    first = next(s for s in result.samples if s.template_id == 0)
    assert (first.prompt, first.prediction.token_text, first.confidence_count, first.popularity) == \
        ("Thomas Ong is a citizen of", "Singapore", 7, 1418)

    result = _golden_exact(store, substitutions, "P495", "Shibuya-kei", "Japan", 5933,
                           (r"^Shibuya-kei(,)? (that )?(was )?(created|originated|formed) in$", ["Japan"]))
    assert {s.template_id for s in result.samples} == set(range(8))
    created = next(s for s in result.samples if s.template_id == 1)
    assert (created.prompt, created.confidence_count, created.bias_tags) == ("Shibuya-kei, that was created in", 8, ())


def test_golden_guesswork_row(store):
    runner = PatternRunner([(r"^Sonar Kollektiv originated in$", ["Russia"])])
    facts = [FactTuple("P495", "Sonar Kollektiv", "Berlin")]
    answers = answer_sets(facts + [FactTuple("P495", "Other", "Russia")])
    result = build_guesswork(facts, store, runner, TsvPopularity({"Sonar Kollektiv": 215}),
                             _config(relations=["P495"]), answers)
    assert len(result.samples) == 1
    sample = result.samples[0]
    assert (sample.prompt, sample.prediction.token_text, sample.gold) == \
        ("Sonar Kollektiv originated in", "Russia", "Berlin")
    assert (sample.confidence_count, sample.popularity) == (1, 215)


def _golden_heuristics(store, substitutions, name, rules):
    runner = PatternRunner(rules)
    answers = answer_sets([FactTuple("P27", "A", "Canada"), FactTuple("P27", "B", "Ukraine")])
    return build_heuristics([("P27", SyntheticSubject(name, "dnd_human"))], store, runner,
                            BiasProbe(runner, substitutions), _config(), answers)


def test_golden_heuristics_rows(store, substitutions):
    result = _golden_heuristics(store, substitutions, "Balo Windhair", [
        (r"^(He|She)\b", ["Canada"]),
        (r"^Balo Windhair(?!, who h)(?!.*common name)", ["Canada"]),
    ])
    assert {s.template_id for s in result.samples} == {0, 1, 2, 3, 4}
    assert all(s.bias_tags == ("prompt",) and s.confidence_count == 5 for s in result.samples)
    assert "Balo Windhair has a citizenship of" in {s.prompt for s in result.samples}

    result = _golden_heuristics(store, substitutions, "Serok Nuvrome", [
        (r"common name", ["Ukraine"]),
        (r"^Serok Nuvrome(?!, who has)(?!.*common name)", ["Ukraine"]),
    ])
    assert len(result.samples) == 6
    assert all(s.bias_tags == ("name",) and s.confidence_count == 6 for s in result.samples)
    assert "Serok Nuvrome, a citizen of" in {s.prompt for s in result.samples}


# --- all builders on one model ---

ALL_RULES = [
    (r"common name", ["Russia"]),
    (r"^Ivan Petrov", ["Russia"]),
    (r"^Zanthor", ["France"]),
    (r"^Blorbix was created in$", ["Japan"]),
]
CORPUS = [
    CorpusEntry("Apollo", ("Apollo is a god of music and poetry in ancient myth .",)),
    CorpusEntry("Rhine", ("Rhine is a river that flows through many lands to the sea",)),
]


def _surviving_templates(store, runner, checker, sample, keep) -> int:
    count = 0
    target = sample.prediction.token_text.strip()
    for query in store.queries(sample.relation_id, sample.subject):
        texts = [p.token_text.strip() for p in runner.topk(query.prompt, 3)]
        if target in texts and keep(checker.report(query, sample.prediction.token_text)):
            count += 1
    return count


def test_all_builders_on_one_model(store, substitutions):
    print_header("All scenarios")
    runner = PatternRunner(ALL_RULES)
    probe = BiasProbe(runner, substitutions)
    popularity = TsvPopularity({"Blorbix": 10, "Zanthor": 5000, "Pierre Dupont": 1001})
    config = _config()
    answers = answer_sets(FACTS)
    splits = {
        "generic": build_generic(CORPUS, 2, runner, seed=0).samples,
        "guesswork": build_guesswork(FACTS, store, runner, popularity, config, answers).samples,
        "heuristics": build_heuristics([("P27", SyntheticSubject("Ivan Petrov", "russian"))], store, runner,
                                       probe, config, answers).samples,
        "exact_fact": build_exact_fact(FACTS, store, runner, popularity, probe, config, answers).samples,
    }
    assert {k: len(v) for k, v in splits.items()} == {"generic": 2, "guesswork": 1, "heuristics": 7, "exact_fact": 16}

    checker = BiasProbe(PatternRunner(ALL_RULES), substitutions)
    keep = {
        "guesswork": lambda report: True,
        "heuristics": lambda report: len(report.tags) == 1,
        "exact_fact": lambda report: not report.tags,
    }
    for scenario, samples in splits.items():
        for sample in samples:
            if scenario == "generic":
                assert not any(is_fact_completion(rel, sample.prediction, labels) for rel, labels in answers.items())
                assert classify(False, None, None, [], None) == "generic"
                continue
            query = store.get(sample.relation_id, sample.template_id).instantiate(sample.subject)
            assert query.prompt == sample.prompt
            report = checker.report(query, sample.prediction.token_text)
            conf = _surviving_templates(store, runner, checker, sample, keep[scenario])
            assert conf == sample.confidence_count
            record = popularity.lookup(sample.subject)
            views = record.views if record is not None else 0
            correct = is_correct(sample.prediction.token_text, sample.gold) if sample.gold else None
            completion = is_fact_completion(sample.relation_id, sample.prediction, answers[sample.relation_id])
            assert classify(completion, conf, views, report.tags, correct) == scenario

    check_disjoint(splits)
    triples = {k: {s.triple for s in v} for k, v in splits.items() if k != "generic"}
    names = list(triples)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert not triples[a] & triples[b]


# --- generic ---

def test_generic_candidate_examples():
    print_header("Generic sentences")
    candidate, reason = generic_candidate("Apollo", "Apollo is a god of music and poetry in ancient myth .")
    assert reason is None
    assert candidate == ("Apollo is a god of music and poetry in ancient", "myth", 1)
    assert generic_candidate("Apollo", "Apollo is a god.") == (None, "too_short")
    assert generic_candidate("Apollo", "Apollo Zeus Hera Ares met in a field today")[1] == "too_many_capitals"
    assert generic_candidate("Apollo", "The god Apollo played music for the crowd")[1] == "not_about_title"
    assert generic_candidate("Apollo", "Apollo is a god of music and song in old Greece today")[1] == \
        "capital_or_digit_continuation"
    assert generic_candidate("Apollo", "Apollo is a god of music and song in old 1990 today")[1] == \
        "capital_or_digit_continuation"
    assert generic_candidate("the cat sat on mat", "the cat sat on mat today")[1] == "subject_fills_prompt"


def test_build_generic_one_sentence_per_article():
    corpus = [
        CorpusEntry("Apollo", ("Apollo is a god.", "Apollo is a god of music and poetry in ancient myth .")),
        CorpusEntry("Rhine", ("Rhine is a river that flows through many lands to the sea",)),
        CorpusEntry("Moss", ("Nothing here",)),
    ]
    result = build_generic(corpus, 2, PatternRunner([]), seed=0)
    assert len(result.samples) == 2
    assert {s.subject for s in result.samples} == {"Apollo", "Rhine"}
    assert all(s.scenario == "generic" and s.subject_char_span[0] == 0 for s in result.samples)
    with pytest.raises(CorpusExhaustedError):
        build_generic(corpus, 3, PatternRunner([]), seed=0)


# --- assembly ---

def _sample(scenario: str, subject: str, template_id: int = 0, text: str = "Japan") -> ScenarioSample:
    return ScenarioSample(scenario=scenario, prompt=f"{subject} was created in", subject=subject,
                          subject_char_span=(0, len(subject)), prediction=Prediction(text, 1, 0.5),
                          relation_id="P495", template_id=template_id)


def test_assemble_exact_mixture_in_scenario_order():
    splits = {
        "exact_fact": [_sample("exact_fact", f"E{i}") for i in range(5)],
        "guesswork": [_sample("guesswork", f"G{i}") for i in range(3)],
    }
    chosen = assemble_dataset(splits, {"exact_fact": 2, "guesswork": 3}, seed=4)
    assert [s.scenario for s in chosen] == ["guesswork"] * 3 + ["exact_fact"] * 2
    assert chosen == assemble_dataset(splits, {"exact_fact": 2, "guesswork": 3}, seed=4)
    assert assemble_dataset(splits, {}, seed=4) == []


def test_assemble_errors():
    splits = {"guesswork": [_sample("guesswork", "G0")], "exact_fact": [_sample("exact_fact", "G0")]}
    with pytest.raises(DisjointnessError):
        assemble_dataset(splits, {"guesswork": 1}, seed=0)
    with pytest.raises(SplitTooSmallError) as info:
        assemble_dataset({"guesswork": [_sample("guesswork", "G0")]}, {"guesswork": 2}, seed=0)
    assert info.value.scenario == "guesswork"


def test_answer_sets_include_first_word():
    answers = answer_sets([FactTuple("P740", "Acme", "New York"), FactTuple("P740", "Bolt", "Paris")])
    assert answers["P740"] == {"New York", "New", "Paris"}


# --- synthetic names ---

def test_synthetic_names_are_seeded_and_unique():
    print_header("Synthetic names")
    a = generate_synthetic_subjects(["russian", "city"], 6, None, seed=1)
    b = generate_synthetic_subjects(["russian", "city"], 6, None, seed=1)
    assert a == b
    assert len({s.name for s in a}) == 6
    assert [s.style for s in a] == ["russian", "city"] * 3
    assert all(len(s.name.split()) == 2 for s in a if s.style == "russian")
    assert style_distribution(a) == {"city": 3, "russian": 3}


def test_entity_collisions_are_skipped():
    first = NameGenerator(seed=2).name("work").name
    generator = NameGenerator(seed=2, entity_checker=LabelSetChecker([first]))
    assert generator.name("work").name != first
    assert generator.collisions >= 1
    everything = type("Everything", (), {"exists": lambda self, label: True})()
    with pytest.raises(NameGenerationError):
        NameGenerator(seed=2, entity_checker=everything, max_attempts=5).name("work")
    with pytest.raises(NameGenerationError):
        NameGenerator(seed=2).name("elvish")


def test_wikidata_checker_matches_exact_labels():
    class FakeClient:
        def get_json(self, url, params=None):
            return {"search": [{"label": "Paris", "match": {"text": "Paname"}}]}

    checker = WikidataChecker(FakeClient(), base_url="https://example.org/w/api.php")
    assert checker.exists("Paris")
    assert checker.exists("Paname")
    assert not checker.exists("Pari")


# --- dataset files ---

def test_dataset_header_and_fact_tsv(tmp_path):
    write_dataset(tmp_path / "d.jsonl", {"format": "recall-dataset", "version": 1}, [{"prompt": "x"}])
    header, records = read_dataset(tmp_path / "d.jsonl")
    assert header["version"] == 1
    assert records == [{"prompt": "x"}]
    write_fact_tuples(tmp_path / "f.tsv", FACTS)
    assert load_fact_tuples(tmp_path / "f.tsv") == FACTS
    (tmp_path / "bad.tsv").write_text("a\tb\n", encoding="utf-8")
    with pytest.raises(MissingInputError):
        load_fact_tuples(tmp_path / "bad.tsv")
