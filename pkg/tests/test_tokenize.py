import pytest
from hypothesis import given
from hypothesis import strategies as st

from revforge.errors import ConfigError
from revforge.tokenize import (
    SubwordVocab,
    apply_fixups,
    detokenize,
    load_fixups,
    load_vocab,
    normalize_ws,
    parse_rules,
    tokenize,
)


def test_tokenize_examples():
    assert tokenize("") == []
    assert tokenize("the pizza.") == ["the", "pizza", "."]
    assert tokenize("I don't know, really.") == ["I", "do", "n't", "know", ",", "really", "."]
    assert tokenize("(see 3.5)") == ["(", "see", "3.5", ")"]


def test_detokenize_examples():
    assert detokenize([]) == ""
    assert detokenize(["I", "do", "n't"]) == "I don't"
    assert detokenize(["plain", "words", "here"]) == "plain words here"
    assert detokenize(["He", "said", '"', "hi", '"', "."]) == 'He said "hi".'


words = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABC", min_size=1, max_size=8)
word_with_punct = st.tuples(
    st.sampled_from(["", "(", '"']), words, st.sampled_from(["", "n't", "'s"]), st.sampled_from(["", ".", ",", "!", "?", ";"])
)


@st.composite
def natural_text(draw):
    items = draw(st.lists(word_with_punct, min_size=0, max_size=12))
    parts = []
    for opening, word, clitic, closing in items:
        close = {"(": ")", '"': '"'}.get(opening, "")
        parts.append(f"{opening}{word}{clitic}{close}{closing}")
    return " ".join(parts)


@given(natural_text())
def test_round_trip_on_naturally_punctuated_text(text):
    assert detokenize(tokenize(text)) == normalize_ws(text)


@given(st.text())
def test_tokenize_is_total(text):
    tokens = tokenize(text)
    assert all(tok and not any(c.isspace() for c in tok) for tok in tokens)
    assert "".join(tokens) == "".join(text.split())


def test_detokenize_idempotent_on_plain_words():
    text = "plain words only"
    assert detokenize(tokenize(detokenize(tokenize(text)))) == text


def _vocab(tmp_path, pieces, marker="##"):
    path = tmp_path / "vocab.txt"
    path.write_text("#marker " + marker + "\n" + "\n".join(pieces) + "\n", encoding="utf-8")
    return path


def test_vocab_greedy_longest_match(tmp_path):
    letters = "abcdefghijklmnopqrstuvwxyz"
    pieces = list(letters) + ["##" + c for c in letters] + ["piz", "##za", "##zza", "the"]
    vocab = load_vocab(_vocab(tmp_path, pieces))
    assert tokenize("the pizza", vocab) == ["the", "piz", "##za"]
    assert tokenize("pizzza", vocab) == ["piz", "##zza"]
    assert detokenize(tokenize("the pizza.", vocab), "##") == "the pizza."


@given(st.text(alphabet="abcxyz?.é ", max_size=30))
def test_vocab_pieces_reconstruct_words(text):
    letters = "abcxyz"
    vocab = SubwordVocab(tuple(list(letters) + ["##" + c for c in letters] + ["ab", "##cx"]))
    pieces = tokenize(text, vocab)
    joined = "".join(p[2:] if p.startswith("##") else p for p in pieces)
    assert joined == "".join(tokenize(text))


def test_vocab_missing_character_fails_at_load(tmp_path):
    path = _vocab(tmp_path, ["a", "##a", "b"])
    with pytest.raises(ConfigError, match="missing"):
        load_vocab(path)
    with pytest.raises(ConfigError):
        load_vocab(_vocab(tmp_path, ["a", "##a"]), alphabet="ab")


def test_fixups_apply_in_order():
    assert apply_fixups("do n't", parse_rules("")) == "do n't"
    assert apply_fixups("do n't", parse_rules("s/ n't/n't/")) == "don't"
    rules = parse_rules("s/ab/X/\ns/Xc/Y/")
    assert apply_fixups("abc abd", rules) == "Y Xd"
    reversed_rules = parse_rules("s/Xc/Y/\ns/ab/X/")
    assert apply_fixups("abc abd", reversed_rules) == "Xc Xd"


def test_fixup_slash_escaping_and_errors():
    rules = parse_rules(r"s/a\/b/a or b/")
    assert apply_fixups("a/b", rules) == "a or b"
    with pytest.raises(ConfigError):
        parse_rules("s/(/x/")
    with pytest.raises(ConfigError):
        parse_rules("not a rule")


def test_default_fixups_restore_conll_tokenization():
    rules = load_fixups()
    assert apply_fixups("I don't know (really).", rules) == "I do n't know ( really ) ."
