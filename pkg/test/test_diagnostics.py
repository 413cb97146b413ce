#!/usr/bin/env python3
import sys
from pathlib import Path

import pytest

# Make project root importable
PROJECT_ROOT = Path(__file__).parent.parent.resolve()
sys.path.insert(0, str(PROJECT_ROOT))

from diagnostics.bias_probes import BiasProbe, ModelFailureError, name_bias
from diagnostics.criteria import (
    confidence_count,
    heuristics_verdict,
    is_correct,
    is_fact_completion,
    lexical_overlap,
)
from diagnostics.popularity import PageviewPopularity, PopularityRecord, TsvPopularity, is_memorized, views_or_zero
from diagnostics.relations import (
    InsufficientTemplatesError,
    SubstitutionTable,
    TemplateStore,
    UnknownRelationError,
)
from engine.runner import Prediction
from helpers import FILLERS, PatternRunner, make_query, print_header
from utils.structured_logger import read_events


def pred(text: str, rank: int = 1) -> Prediction:
    return Prediction(token_text=text, rank=rank, probability=0.5)


@pytest.fixture(scope="module")
def substitutions():
    return SubstitutionTable.load()


# --- templates ---

def test_template_store_drops_subject_medial_templates():
    print_header("Templates")
    store = TemplateStore.load()
    p101 = store.for_relation("P101")
    assert len(p101) == 7
    assert all(t.template.startswith("[X]") for t in p101)
    assert len(store.for_relation("P495")) == 16
    with pytest.raises(UnknownRelationError):
        store.for_relation("P999")


def test_instantiate_cuts_before_object():
    store = TemplateStore.load(relations=["P27"])
    query = store.get("P27", 1).instantiate("Ann Lee")
    assert query.prompt == "Ann Lee, a citizen of"
    assert query.subject_char_span == (0, 7)
    assert query.template_id == 1


# --- criteria ---

def test_fact_completion():
    answers = {"France", "Paris", "physics"}
    assert is_fact_completion("P27", pred("France"), answers)
    assert not is_fact_completion("P27", pred("the"), answers)
    assert not is_fact_completion("P27", pred("Narnia"), answers)
    assert is_fact_completion("P101", pred("physics"), answers)
    with pytest.raises(UnknownRelationError):
        is_fact_completion("P999", pred("France"), answers)


def test_confidence_count_boundary():
    print_header("Confidence boundary")
    topk = {i: [pred("Japan" if i < 4 else "the"), pred("a", 2)] for i in range(8)}
    assert confidence_count(topk, "Japan") == 4
    topk[4] = [pred("x"), pred(" Japan", 2)]
    assert confidence_count(topk, "Japan") == 5
    with pytest.raises(InsufficientTemplatesError):
        confidence_count({i: [pred("Japan")] for i in range(4)}, "Japan")


def test_lexical_overlap_examples():
    assert lexical_overlap("Toyota Corolla", "Toyota")
    assert lexical_overlap("Kowalski Group", "Kowal")
    assert lexical_overlap("Jean-Luc Picard", "Luc")
    assert not lexical_overlap("Jean-Luc Picard", "Lu")
    assert not lexical_overlap("Toyota Corolla", "toyota")
    assert not lexical_overlap("Anna Berg", "Japan")
    assert lexical_overlap("Olre Hellspirit", "Hell")
    assert lexical_overlap("San Salcos", "Sal")
    assert not lexical_overlap("Thomas Ong", "Singapore")


def test_is_correct_prefix_boundary():
    assert is_correct("Japan", "Japan")
    assert is_correct("Fran", "France")
    assert not is_correct("Fra", "France")
    assert not is_correct("Frank", "France")
    assert not is_correct("", "France")
    # the length rule counts the emitted token, leading space included
    assert is_correct(" Bed", "Bedford")
    assert not is_correct("Bed", "Bedford")
    assert not is_correct(" Be", "Bedford")


def test_heuristics_verdict():
    assert heuristics_verdict(False, False, False, False).kind == "none"
    assert heuristics_verdict(True, True, False, False).kind == "multiple"
    single = heuristics_verdict(False, True, False, False)
    assert (single.kind, single.tag, single.eligible) == ("single", "name", True)
    assert not heuristics_verdict(False, False, True, True).eligible


# --- substitutions ---

def test_substituted_prompts_fix_grammar(substitutions):
    query = make_query("Ann Lee's area of work is", "Ann Lee", relation_id="P101", template_id=5)
    prompts = substitutions.substituted_prompts(query.prompt, query.subject_char_span, "P101")
    assert prompts == ["His area of work is", "Her area of work is"]


def test_substitutes_strict_and_external(substitutions):
    assert substitutions.substitutes("P495") == ["It"]
    with pytest.raises(UnknownRelationError):
        substitutions.substitutes("P103")
    assert substitutions.substitutes("P103", strict=False) == ["He", "She", "It"]
    assert not substitutions.name_bias_applies("P103")
    assert substitutions.name_bias_applies("P103", external=True)


# --- bias probes ---

def test_name_bias_rank_boundary(substitutions):
    print_header("Name bias rank")
    at_ten = PatternRunner([(r"common name", FILLERS[:9] + ["Poland"])])
    at_eleven = PatternRunner([(r"common name", FILLERS[:10] + ["Poland"])])
    assert name_bias(at_ten, "Anna Kowal", "Poland", substitutions, topk=10)
    assert not name_bias(at_eleven, "Anna Kowal", "Poland", substitutions, topk=10)


def test_prompt_bias_uses_relation_substitutes(substitutions):
    runner = PatternRunner([(r"^He is a citizen of$", ["France"])])
    probe = BiasProbe(runner, substitutions)
    query = make_query("Ann Lee is a citizen of", "Ann Lee", relation_id="P27")
    flag, evidence = probe.prompt_bias(query, "France")
    assert flag
    assert "He is a citizen of" in evidence[0]
    assert not probe.prompt_bias(query, "Spain")[0]


def test_report_collects_all_cues(substitutions):
    runner = PatternRunner([
        (r"common name", ["Poland"]),
        (r"^She", ["Poland"]),
    ])
    probe = BiasProbe(runner, substitutions)
    query = make_query("Polanski Mark was born in", "Polanski Mark", relation_id="P19")
    report = probe.report(query, "Poland")
    assert report.tags == ["name", "prompt"]
    assert not report.lexical_overlap
    report = probe.report(make_query("Polandia was created in", "Polandia"), "Poland")
    assert report.tags == ["lexical"]


def test_name_probes_cached_per_subject(substitutions):
    runner = PatternRunner([])
    probe = BiasProbe(runner, substitutions)
    probe.name_bias("Anna Kowal", "Poland")
    probe.name_bias("Anna Kowal", "France")
    assert len(runner.calls) == len(substitutions.name_probes)


def test_model_failure_is_wrapped(substitutions):
    class Broken:
        def topk(self, prompt, k):
            raise RuntimeError("boom")

    with pytest.raises(ModelFailureError):
        BiasProbe(Broken(), substitutions).name_bias("Anna", "Poland")


# --- popularity ---

def test_memorization_threshold():
    assert not is_memorized(PopularityRecord("a", 1000))
    assert is_memorized(PopularityRecord("a", 1001))


def test_missing_popularity_is_zero_and_logged():
    provider = TsvPopularity({"Known": 5000})
    assert views_or_zero(provider, "Known") == 5000
    assert views_or_zero(provider, "Unknown") == 0
    assert not is_memorized(None, subject="Unknown")
    warnings = [e for e in read_events() if e["step"] == "popularity_missing"]
    assert len(warnings) == 2
    assert warnings[0]["outcome"] == "warning"


def test_tsv_popularity_load(tmp_path):
    path = tmp_path / "pop.tsv"
    path.write_text("subject\tviews\nTokyo\t120000\nBlorb\t3\n", encoding="utf-8")
    provider = TsvPopularity.load(path)
    assert provider.lookup("Tokyo").views == 120000
    assert provider.lookup("Blorb").views == 3
    assert provider.lookup("subject") is None


class FakeClient:
    def __init__(self, body):
        self.body = body
        self.urls = []

    def get_json(self, url, params=None):
        self.urls.append(url)
        return self.body


def test_pageview_popularity_floors_monthly_mean():
    client = FakeClient({"items": [{"views": 10}, {"views": 11}, {"views": 12}, {"views": 12}]})
    provider = PageviewPopularity(client, base_url="https://example.org/per-article", year=2019)
    assert provider.lookup("Ann Lee").views == 11
    assert client.urls == [
        "https://example.org/per-article/en.wikipedia/all-access/user/Ann_Lee/monthly/2019010100/2019123100"
    ]
    assert PageviewPopularity(FakeClient(None), base_url="https://example.org").lookup("X") is None
