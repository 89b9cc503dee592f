import random

from hypothesis import given, strategies as st

from supportkit.text import (find_phrase, length_summary, segment_sentences, tokenize,
                             truncate_text)

from oracles import segment_by_scan


def test_tokenize_examples():
    assert tokenize("") == []
    assert tokenize("No gross effusion.") == ["no", "gross", "effusion", "."]
    assert tokenize("Heart size is normal, lungs clear!") == [
        "heart", "size", "is", "normal", ",", "lungs", "clear", "!"]


@given(st.text(max_size=80))
def test_tokenize_idempotent_on_rejoin(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


def test_segment_punctuation_split():
    assert segment_sentences("A. B? C!") == ["A.", "B?", "C!"]


def test_segment_long_evidence_sentence_stays_whole():
    s = ("Classically demonstrated in M-mode, the appearance of which the moniker is derived, "
         "it is specific for the identification of a pleural effusion, although insensitive, "
         "as it may be absent with dense or heavily septated collections.")
    assert segment_sentences(s) == [s]


def test_segment_abbreviations_and_paragraphs():
    text = "Seen in e.g. Children. Dr. Smith agrees.\nStill the same paragraph.\n\nNew one."
    assert segment_sentences("Line one\ncontinues here. End.") == ["Line one continues here.", "End."]
    assert segment_sentences(text) == [
        "Seen in e.g. Children.", "Dr. Smith agrees.", "Still the same paragraph.", "New one."]


def _synthetic_article(n_sentences, seed):
    rng = random.Random(seed)
    words = ["lung", "effusion", "heart", "opacity", "vs.", "e.g.", "Dr.", "3.5", "cm",
             "(right)", "\"sign\"", "base", "angle", "Fig.", "appears"]
    ends = [".", "?", "!", ".\"", ".)"]
    out = []
    for i in range(n_sentences):
        body = " ".join(rng.choice(words) for _ in range(rng.randint(3, 9)))
        first = rng.choice(["The", "A", "In", "2", "Mild", "Some"])
        sep = rng.choice([" ", " ", "\n", "\n\n"])
        out.append(f"{first} {body}{rng.choice(ends)}{sep}")
    return "".join(out)


def test_segment_matches_scan_oracle_on_200_sentence_article():
    for seed in range(5):
        article = _synthetic_article(200, seed)
        assert segment_sentences(article) == segment_by_scan(article)


def test_find_phrase():
    toks = tokenize("no effusion and no pleural effusion")
    assert find_phrase(toks, ["effusion"]) == [1, 5]
    assert find_phrase(toks, ["pleural", "effusion"]) == [4]
    assert find_phrase(toks, []) == []


@given(st.text(max_size=120), st.integers(min_value=1, max_value=40))
def test_truncate_text_keeps_token_prefix(text, budget):
    cut, n, was_cut = truncate_text(text, budget)
    full = tokenize(text)
    assert tokenize(cut) == full[:budget]
    assert n == min(len(full), budget)
    assert was_cut == (len(full) > budget)


def test_length_summary():
    s = length_summary([1, 2, 3, 4])
    assert s["n"] == 4 and s["mean"] == 2.5 and s["median"] == 2.5 and s["max"] == 4.0
    assert length_summary([])["mean"] is None
