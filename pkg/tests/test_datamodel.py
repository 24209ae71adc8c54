import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointlink.datamodel import (
    CandidateDictionary,
    FormatError,
    KnowledgeGraph,
    SpanError,
    Token,
    filter_linkable,
    load_corpus,
    load_dictionary,
    load_knowledge_graph,
    save_corpus,
)

from conftest import sentence, tuple_for, write


def test_corpus_one_sentence_two_mentions(tmp_path):
    path = write(tmp_path / "c.tsv",
                 "d1\t0\tGerman|NNP|0110 is|VBZ spoken|VBN in|IN Berlin|NNP\t0,1,German_language;4,5,Berlin\n")
    sentences, tuples = load_corpus(path)
    assert len(sentences) == 1 and len(tuples) == 2
    assert tuples[0].span.mid != tuples[1].span.mid
    assert sentences[0].tokens[0] == Token("German", "NNP", "0110")
    assert tuples[0].span.surface == "German"
    assert tuples[1].gold_entity == "Berlin"


def test_empty_corpus(tmp_path):
    assert load_corpus(write(tmp_path / "c.tsv", "")) == ([], [])


def test_span_out_of_range(tmp_path):
    path = write(tmp_path / "c.tsv", "d1\t0\ta b\t1,3,X\n")
    with pytest.raises(SpanError, match="d1"):
        load_corpus(path)


def test_malformed_line_names_line_number(tmp_path):
    path = write(tmp_path / "c.tsv", "d1\t0\ta b\t\nd1\tx\ta\t\n")
    with pytest.raises(FormatError, match="line 2"):
        load_corpus(path)


def test_mids_unique_across_repeated_surfaces(tmp_path):
    path = write(tmp_path / "c.tsv", "d1\t0\tGerman x\t0,1,A\nd1\t1\tGerman y\t0,1,B\n")
    _, tuples = load_corpus(path)
    assert [t.span.surface for t in tuples] == ["German", "German"]
    assert tuples[0].span.mid != tuples[1].span.mid


def test_nil_mentions_are_unlinkable(tmp_path):
    _, tuples = load_corpus(write(tmp_path / "c.tsv", "d\t0\ta b\t0,1,NIL;1,2,--NME--\n"))
    assert [t.gold_entity for t in tuples] == [None, None]


def test_kg_duplicate_triples_sum_undirected(tmp_path):
    kg = load_knowledge_graph(write(tmp_path / "kg.tsv", "A\trel\tB\t1\nB\trel\tA\t1\n"))
    assert kg.ee_edges == [("A", "B", 2.0)]
    assert kg.has_ee_edge("A", "B") and kg.has_ee_edge("B", "A")


def test_kg_empty(tmp_path):
    kg = load_knowledge_graph(write(tmp_path / "kg.tsv", ""))
    assert not kg.entities and not kg.ee_edges and not kg.et_edges


def test_kg_is_a(tmp_path):
    kg = load_knowledge_graph(write(tmp_path / "kg.tsv", "A\tis-a\tCity\t1\n"))
    assert kg.et_edges == [("A", "City", 1.0)]
    assert "City" in kg.types and "A" in kg.entities


def test_kg_dangling_type_edge(tmp_path):
    with pytest.raises(FormatError):
        load_knowledge_graph(write(tmp_path / "kg.tsv", "A\tis-a\t\t1\n"))
    with pytest.raises(FormatError):
        load_knowledge_graph(write(tmp_path / "kg.tsv", "A\trel\tB\t1\nC\tis-a\tB\t1\n"))


def test_dictionary_grouping_and_summing(tmp_path):
    d = load_dictionary(write(tmp_path / "d.tsv",
                              "German\tGermany\t3\nGerman\tGerman_language\t1\nGerman\tGermany\t2\n"))
    assert d.entries == {"German": {"Germany": 5.0, "German_language": 1.0}}


def test_dictionary_zero_count(tmp_path):
    with pytest.raises(FormatError):
        load_dictionary(write(tmp_path / "d.tsv", "German\tGermany\t0\n"))


def test_filter_linkable_counts_drops():
    s = sentence("d", 0, ["German", "x", "Paris"])
    tuples = [tuple_for(s, 0, 1, 0, "Germany"), tuple_for(s, 2, 3, 1, "Paris"), tuple_for(s, 1, 2, 2, None)]
    d = CandidateDictionary()
    d.add("German", "Germany", 3)
    kept, dropped = filter_linkable(tuples, d)
    assert [t.span.mid for t in kept] == [0] and dropped == 2
    for t in kept:
        assert t.gold_entity in d.entries[t.span.surface]


words = st.text(alphabet="abcXYZ09-", min_size=1, max_size=6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.lists(words, min_size=1, max_size=6), st.data()), min_size=1, max_size=5))
def test_corpus_round_trip(tmp_path_factory, records):
    sentences, tuples = [], []
    mid = 0
    for i, (toks, data) in enumerate(records):
        s = sentence("doc", i, toks, ["NN"] * len(toks))
        sentences.append(s)
        start = data.draw(st.integers(0, len(toks) - 1))
        end = data.draw(st.integers(start + 1, len(toks)))
        tuples.append(tuple_for(s, start, end, mid, data.draw(st.sampled_from(["E1", "E2", None]))))
        mid += 1
    path = tmp_path_factory.mktemp("rt") / "c.tsv"
    save_corpus(path, sentences, tuples)
    s2, t2 = load_corpus(path)
    assert s2 == sentences
    assert [(t.span.sentence_ref, t.span.start, t.span.end, t.span.surface, t.gold_entity) for t in t2] == \
        [(t.span.sentence_ref, t.span.start, t.span.end, t.span.surface, t.gold_entity) for t in tuples]
    mids = [t.span.mid for t in t2]
    assert mids == sorted(set(mids))


@given(st.lists(st.tuples(st.sampled_from("ABCDE"), st.sampled_from("ABCDE")), max_size=12))
def test_undirected_query_symmetry(pairs):
    kg = KnowledgeGraph()
    for a, b in pairs:
        kg.add_ee(a, b)
    for a in "ABCDE":
        for b in "ABCDE":
            assert kg.has_ee_edge(a, b) == kg.has_ee_edge(b, a)
