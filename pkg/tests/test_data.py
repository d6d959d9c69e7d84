"""Corpus ingestion, metrics, and the synthetic generator."""

import numpy as np
import pytest

from seqlab.data import (BOS_LABEL, PAD, RESERVED, UNK, UNK_ID, Corpus,
                         SequenceExample, SyntheticTask, Vocabulary,
                         bio_chunk_f1, extract_chunks, generate_synthetic,
                         iter_conll, read_conll, token_accuracy, tokenize_word,
                         write_conll, write_corpus)
from seqlab.errors import DimensionError, FormatError

# ---------------------------------------------------------------- tokenizing


def test_tokenize_word():
    assert tokenize_word("Flight") == "flight"
    assert tokenize_word("42") == "NUM"
    assert tokenize_word("3,500.00") == "NUM"
    assert tokenize_word("NUM") == "NUM"  # idempotent
    assert tokenize_word("b737") == "b737"  # digits inside a word survive
    assert tokenize_word(".") == "."


# -------------------------------------------------------------- vocabularies


def test_vocabulary_reserved_first():
    v = Vocabulary.build(["cat", "dog", "cat", "<unk>"])
    assert v.symbols == RESERVED + ("cat", "dog")
    assert v.id("dog") == 4
    assert v.id("missing") == UNK_ID
    assert v.symbol(0) == PAD
    assert "dog" in v and "horse" not in v
    assert len(v) == 5


def test_vocabulary_rejects_bad_layout():
    with pytest.raises(FormatError):
        Vocabulary(("a", "b", "c"))
    with pytest.raises(FormatError):
        Vocabulary(RESERVED + ("a", "a"))
    with pytest.raises(DimensionError):
        Vocabulary.build([]).symbol(99)


def test_sequence_example_validation():
    with pytest.raises(FormatError):
        SequenceExample((), ())
    with pytest.raises(FormatError):
        SequenceExample((1, 2), (1,))
    v = Vocabulary.build(["a"])
    with pytest.raises(FormatError):
        Corpus((SequenceExample((9,), (3,)),), v, v)


# -------------------------------------------------------------------- CoNLL


def test_conll_round_trip(tmp_path):
    seqs = [[("The", "B-NP"), ("cat", "I-NP"), ("sat", "O")],
            [("42", "B-NUM")]]
    path = tmp_path / "toy.conll"
    write_conll(path, seqs)
    assert list(iter_conll(path)) == seqs

    corpus = read_conll(path)
    assert corpus.word_vocab.symbols == RESERVED + ("the", "cat", "sat", "NUM")
    assert corpus.label_vocab.symbols == RESERVED + ("B-NP", "I-NP", "O", "B-NUM")
    assert corpus.examples[0].word_ids == (3, 4, 5)
    assert corpus.examples[1].word_ids == (6,)

    # writing the mapped corpus back and re-reading is stable
    out = tmp_path / "again.conll"
    write_corpus(out, corpus)
    again = read_conll(out, corpus.word_vocab, corpus.label_vocab)
    assert again.examples == corpus.examples


def test_read_conll_min_freq_and_unk(tmp_path):
    path = tmp_path / "freq.conll"
    write_conll(path, [[("a", "O"), ("a", "O"), ("b", "O")]])
    corpus = read_conll(path, min_freq=2)
    assert "a" in corpus.word_vocab
    assert "b" not in corpus.word_vocab
    assert corpus.examples[0].word_ids == (3, 3, UNK_ID)


def test_read_conll_test_mode_maps_unseen(tmp_path):
    train = tmp_path / "train.conll"
    write_conll(train, [[("alpha", "O")]])
    corpus = read_conll(train)
    test = tmp_path / "test.conll"
    write_conll(test, [[("alpha", "O"), ("omega", "B-X")]])
    mapped = read_conll(test, corpus.word_vocab, corpus.label_vocab)
    assert mapped.examples[0].word_ids == (3, UNK_ID)
    assert mapped.examples[0].label_ids == (3, UNK_ID)


def test_iter_conll_errors(tmp_path):
    bad = tmp_path / "bad.conll"
    bad.write_text("token O no tabs\n", encoding="utf-8")
    with pytest.raises(FormatError) as err:
        list(iter_conll(bad))
    assert "bad.conll:1" in str(err.value)

    empty = tmp_path / "empty.conll"
    empty.write_text("\n\n", encoding="utf-8")
    with pytest.raises(FormatError):
        list(iter_conll(empty))


def test_iter_conll_missing_trailing_blank(tmp_path):
    path = tmp_path / "notrail.conll"
    path.write_text("a\tO\nb\tO", encoding="utf-8")
    assert list(iter_conll(path)) == [[("a", "O"), ("b", "O")]]


# ------------------------------------------------------------------- metrics


def test_token_accuracy_direct():
    gold = [["a", "b"], ["c"]]
    assert token_accuracy(gold, [["a", "b"], ["c"]]) == 1.0
    assert token_accuracy(gold, [["a", "x"], ["c"]]) == pytest.approx(2 / 3)
    with pytest.raises(DimensionError):
        token_accuracy(gold, [["a", "b"]])
    with pytest.raises(DimensionError):
        token_accuracy([["a"]], [["a", "b"]])


def test_extract_chunks_conlleval_cases():
    # an I- run with no B- still opens a chunk (conlleval convention)
    assert extract_chunks(["I-NP", "I-NP", "O"]) == {(0, 1, "NP")}
    # B- always opens a new chunk, even after the same type
    assert extract_chunks(["B-NP", "B-NP"]) == {(0, 0, "NP"), (1, 1, "NP")}
    # type switch inside an I- run splits the chunk
    assert extract_chunks(["B-NP", "I-VP"]) == {(0, 0, "NP"), (1, 1, "VP")}
    assert extract_chunks(["O", "O"]) == set()
    assert extract_chunks(["B-A", "I-A", "I-A"]) == {(0, 2, "A")}
    with pytest.raises(FormatError):
        extract_chunks(["B-NP", "X-NP"])
    with pytest.raises(FormatError):
        extract_chunks(["B"])  # bare prefix with no type


def _brute_force_chunks(labels):
    """Reference matcher: try every span, keep the maximal ones."""
    n = len(labels)
    found = set()
    for start in range(n):
        lab = labels[start]
        if lab == "O":
            continue
        typ = lab[2:]
        begins = lab.startswith("B-") or (
            lab.startswith("I-")
            and not (start > 0 and labels[start - 1] in (f"B-{typ}", f"I-{typ}"))
        )
        if not begins:
            continue
        end = start
        while end + 1 < n and labels[end + 1] == f"I-{typ}":
            end += 1
        found.add((start, end, typ))
    return found


def test_extract_chunks_against_brute_force():
    rng = np.random.default_rng(99)
    alphabet = ["O", "B-NP", "I-NP", "B-VP", "I-VP", "B-PP", "I-PP"]
    for _ in range(300):
        labels = [alphabet[i] for i in rng.integers(0, len(alphabet), size=rng.integers(1, 12))]
        assert extract_chunks(labels) == _brute_force_chunks(labels)


def test_bio_chunk_f1_hand_case():
    gold = [["B-NP", "I-NP", "O", "B-VP"]]
    pred = [["B-NP", "I-NP", "B-VP", "I-VP"]]
    score = bio_chunk_f1(gold, pred)
    # gold chunks {(0,1,NP),(3,3,VP)}; pred {(0,1,NP),(2,3,VP)}
    assert (score.tp, score.fp, score.fn) == (1, 1, 1)
    assert score.precision == pytest.approx(0.5)
    assert score.recall == pytest.approx(0.5)
    assert score.f1 == pytest.approx(0.5)


def test_bio_chunk_f1_empty_edge():
    score = bio_chunk_f1([["O"]], [["O"]])
    assert (score.tp, score.fp, score.fn) == (0, 0, 0)
    assert score.f1 == 0.0


# ---------------------------------------------------------------- synthetic


def test_synthetic_task_deterministic():
    a = SyntheticTask(order=2, n_words=20, n_labels=8, seed=7)
    b = SyntheticTask(order=2, n_words=20, n_labels=8, seed=7)
    assert a.table_checksum() == b.table_checksum()
    assert a.table_checksum() != SyntheticTask(2, 20, 8, seed=8).table_checksum()
    assert a.table.shape == (20, 9, 9)
    assert a.sample_sequences(5, (3, 6), seed=1) == b.sample_sequences(5, (3, 6), seed=1)


def test_synthetic_sequences_follow_the_table():
    task = SyntheticTask(order=2, n_words=10, n_labels=4, seed=3)
    for seq in task.sample_sequences(20, (2, 9), seed=5):
        assert 2 <= len(seq) <= 9
        wids = [int(w[1:]) for w, _ in seq]
        expect = [f"l{l}" for l in task.oracle_labels(wids)]
        assert [lab for _, lab in seq] == expect


def test_synthetic_order_zero():
    task = SyntheticTask(order=0, n_words=6, n_labels=3, seed=1)
    assert task.table.shape == (6,)
    labels = task.oracle_labels([0, 5, 0])
    assert labels[0] == labels[2]  # order 0: label is a function of the word


def test_generate_synthetic_corpus():
    corpus = generate_synthetic(1, (12, 5), (4, 8), 30, seed=2)
    assert len(corpus) == 30
    assert len(corpus.word_vocab) == 15  # 3 reserved + 12
    assert len(corpus.label_vocab) == 8
    for ex in corpus.examples:
        assert 4 <= len(ex) <= 8
