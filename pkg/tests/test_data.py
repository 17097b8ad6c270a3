import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dskg import data
from dskg.data import (
    RawTriple,
    TripleParseError,
    augment_reverse,
    batch_iterator,
    build_vocabulary,
    index_dataset,
    parse_triples,
)

labels = st.text(alphabet="abcdefghij0123456789", min_size=1, max_size=4)
raw_triples = st.builds(RawTriple, labels, labels, labels)


class TestParse:
    def test_basic_line(self):
        out = parse_triples(["USA\tcontains\tNewYorkCity"])
        assert out == [RawTriple("USA", "contains", "NewYorkCity")]

    def test_empty_stream(self):
        assert parse_triples([]) == []

    def test_blank_lines_skipped(self):
        out = parse_triples(["\n", "a\tp\tb\n", "   \n"])
        assert out == [RawTriple("a", "p", "b")]

    def test_two_fields_errors_with_line_number(self):
        with pytest.raises(TripleParseError) as err:
            parse_triples(["a\tp\tb", "a\tb"])
        assert err.value.line_number == 2
        assert err.value.line == "a\tb"

    def test_four_fields_error(self):
        with pytest.raises(TripleParseError):
            parse_triples(["a\tp\tb\tc"])

    def test_empty_field_error(self):
        with pytest.raises(TripleParseError):
            parse_triples(["a\t\tb"])

    def test_reserved_relation_suffix_rejected(self):
        with pytest.raises(TripleParseError):
            parse_triples([f"a\tp{data.REVERSE_MARKER}\tb"])

    def test_file_object(self):
        stream = io.StringIO("x\ty\tz\n")
        assert parse_triples(stream) == [RawTriple("x", "y", "z")]


class TestVocabulary:
    def test_two_triple_example(self):
        vocab = build_vocabulary(parse_triples(["a\tp\tb", "c\tp\tb"]))
        assert vocab.entity_labels == ["b", "a", "c"]
        assert list(vocab.entity_freqs) == [2, 1, 1]
        assert vocab.relation_labels == ["p", "p" + data.REVERSE_MARKER]
        assert vocab.reverse(0) == 1 and vocab.reverse(1) == 0

    def test_self_loop_counts_twice(self):
        vocab = build_vocabulary([RawTriple("a", "p", "a")])
        assert vocab.entity_freqs[vocab.entity_ids["a"]] == 2

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            build_vocabulary([])

    def test_reverse_inherits_frequency(self):
        vocab = build_vocabulary(parse_triples(["a\tp\tb", "c\tp\td", "a\tq\tb"]))
        p, prev = vocab.relation_ids["p"], vocab.relation_ids["p" + data.REVERSE_MARKER]
        assert vocab.relation_freqs[p] == vocab.relation_freqs[prev] == 2

    @given(st.lists(raw_triples, min_size=1, max_size=40))
    def test_frequency_ordering(self, triples):
        vocab = build_vocabulary(triples)
        assert np.all(np.diff(vocab.entity_freqs) <= 0)
        assert np.all(np.diff(vocab.relation_freqs) <= 0)

    @given(st.lists(raw_triples, min_size=1, max_size=40))
    def test_reverse_involution_no_fixed_points(self, triples):
        vocab = build_vocabulary(triples)
        rev = vocab.reverse_of
        ids = np.arange(len(rev))
        assert np.all(rev[rev] == ids)
        assert np.all(rev != ids)

    @given(st.lists(raw_triples, min_size=1, max_size=30))
    def test_index_roundtrip(self, triples):
        vocab = build_vocabulary(triples)
        ids = data.index_triples(triples, vocab)
        assert data.deindex_triples(ids, vocab) == list(triples)


class TestAugment:
    def test_single_triple(self):
        vocab = build_vocabulary([RawTriple("a", "p", "b")])
        ids = data.index_triples([RawTriple("a", "p", "b")], vocab)
        out = augment_reverse(ids, vocab)
        assert out.shape == (2, 3)
        a, b = vocab.entity_ids["a"], vocab.entity_ids["b"]
        p = vocab.relation_ids["p"]
        assert list(out[0]) == [a, p, b]
        assert list(out[1]) == [b, vocab.reverse(p), a]

    def test_empty(self):
        vocab = build_vocabulary([RawTriple("a", "p", "b")])
        out = augment_reverse(np.empty((0, 3), dtype=np.int32), vocab)
        assert out.shape == (0, 3)

    @given(st.lists(raw_triples, min_size=1, max_size=25))
    def test_order_and_double_length(self, triples):
        vocab = build_vocabulary(triples)
        ids = data.index_triples(triples, vocab)
        out = augment_reverse(ids, vocab)
        assert len(out) == 2 * len(ids)
        assert np.array_equal(out[: len(ids)], ids)

    @given(st.lists(raw_triples, min_size=1, max_size=25))
    def test_augment_fixed_point_after_dedup(self, triples):
        vocab = build_vocabulary(triples)
        ids = data.index_triples(triples, vocab)
        once = augment_reverse(ids, vocab)
        twice = augment_reverse(once, vocab)
        assert set(map(tuple, once)) == set(map(tuple, twice))

    def test_out_of_bounds_rejected(self):
        vocab = build_vocabulary([RawTriple("a", "p", "b")])
        with pytest.raises(ValueError):
            augment_reverse(np.array([[0, 99, 1]]), vocab)


class TestIndexedDataset:
    def test_known_answers_example(self):
        ds = index_dataset(parse_triples(["a\tp\tb", "a\tp\tc"]))
        a = ds.vocab.entity_ids["a"]
        b = ds.vocab.entity_ids["b"]
        c = ds.vocab.entity_ids["c"]
        p = ds.vocab.relation_ids["p"]
        assert set(ds.known_answers(a, p)) == {b, c}
        assert len(ds.known_answers(b, p)) == 0

    def test_known_answers_cover_all_splits(self, tiny_dataset):
        ds = tiny_dataset
        for split in ("train", "valid", "test"):
            for s, r, o in ds.split(split):
                assert o in ds.known_answers(int(s), int(r))
        # head direction through the reverse relation as well
        for s, r, o in ds.test:
            assert s in ds.known_answers(int(o), ds.vocab.reverse(int(r)))

    def test_unknown_label_raises(self):
        train = parse_triples(["a\tp\tb"])
        with pytest.raises(ValueError):
            index_dataset(train, valid=[RawTriple("zzz", "p", "b")])

    def test_train_holds_both_orientations(self, tiny_dataset):
        ds = tiny_dataset
        assert len(ds.train) == 2 * ds.num_raw_train
        forward = set(map(tuple, ds.train[: ds.num_raw_train]))
        for s, r, o in forward:
            assert (o, ds.vocab.reverse(r), s) in set(map(tuple, ds.train))


class TestBatchIterator:
    def test_partition_sizes(self):
        triples = np.arange(15).reshape(5, 3)
        sizes = [len(b) for b in batch_iterator(triples, 2, seed=0)]
        assert sizes == [2, 2, 1]

    def test_same_seed_identical(self):
        triples = np.arange(30).reshape(10, 3)
        a = [b.copy() for b in batch_iterator(triples, 3, seed=42)]
        b = [b.copy() for b in batch_iterator(triples, 3, seed=42)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @given(st.integers(1, 7), st.integers(1, 30), st.integers(0, 10))
    def test_epoch_is_a_permutation(self, batch_size, n, seed):
        triples = np.arange(3 * n).reshape(n, 3)
        batches = list(batch_iterator(triples, batch_size, seed=seed))
        merged = np.concatenate(batches)
        assert Counter(map(tuple, merged)) == Counter(map(tuple, triples))

    def test_zero_batch_size_rejected(self):
        with pytest.raises(ValueError):
            next(batch_iterator(np.zeros((2, 3)), 0, seed=0))


class TestInverseAudit:
    def test_exposed_pair(self, inverse_pair_files):
        ds = index_dataset(
            data.load_triples(inverse_pair_files / "train.txt"),
            data.load_triples(inverse_pair_files / "valid.txt"),
            data.load_triples(inverse_pair_files / "test.txt"),
        )
        rows = data.audit_inverse_pairs(ds)
        by_pair = {
            (ds.vocab.relation_labels[r.train_relation], ds.vocab.relation_labels[r.test_relation]): r
            for r in rows
        }
        row = by_pair[("contains", "containedby")]
        assert row.overlap == 1
        assert row.exposed_fraction == 1.0

    def test_disjoint_relations_no_rows(self):
        ds = index_dataset(
            parse_triples(["a\tp\tb", "c\tq\td"]),
            test=[RawTriple("a", "q", "c")],
        )
        assert data.audit_inverse_pairs(ds) == []

    def test_only_forward_relations_reported(self, inverse_pair_files):
        ds = index_dataset(
            data.load_triples(inverse_pair_files / "train.txt"),
            data.load_triples(inverse_pair_files / "valid.txt"),
            data.load_triples(inverse_pair_files / "test.txt"),
        )
        for row in data.audit_inverse_pairs(ds):
            assert not ds.vocab.is_reverse[row.train_relation]
            assert not ds.vocab.is_reverse[row.test_relation]


class TestCache:
    def test_roundtrip(self, tiny_dataset, tmp_path):
        path = tmp_path / "dataset.dskg"
        data.save_dataset(tiny_dataset, path)
        loaded = data.load_dataset(path)
        assert loaded.vocab.entity_labels == tiny_dataset.vocab.entity_labels
        assert loaded.vocab.relation_labels == tiny_dataset.vocab.relation_labels
        assert np.array_equal(loaded.vocab.reverse_of, tiny_dataset.vocab.reverse_of)
        assert np.array_equal(loaded.train, tiny_dataset.train)
        assert np.array_equal(loaded.valid, tiny_dataset.valid)
        assert np.array_equal(loaded.test, tiny_dataset.test)
        assert data.dataset_stats(loaded) == data.dataset_stats(tiny_dataset)

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"NOTADATA" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            data.load_dataset(path)

    def test_save_is_deterministic(self, tiny_dataset, tmp_path):
        p1, p2 = tmp_path / "one.dskg", tmp_path / "two.dskg"
        data.save_dataset(tiny_dataset, p1)
        data.save_dataset(tiny_dataset, p2)
        assert p1.read_bytes() == p2.read_bytes()
