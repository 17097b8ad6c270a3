"""Triple files, frequency-ordered vocabularies, and indexed splits.

Triples live in tab-separated text files, one ``subject<TAB>relation<TAB>object``
per line. Entities and relations get integer ids in descending order of
training frequency (ties broken by first appearance), every forward relation
gets an artificial reverse partner, and the training split is materialized
with both orientations of every triple. The indexed dataset also carries the
lookup structures needed later: known-answer sets for filtered ranking and
membership keys for triple-level precision scoring.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

# Suffix appended to a forward relation's label to name its reverse partner.
# parse_triples rejects relation fields ending with it, so the reverse labels
# can never collide with labels read from disk.
REVERSE_MARKER = "^-1"

CACHE_MAGIC = b"DSKGDAT1"


class TripleParseError(ValueError):
    """Malformed line in a triple file."""

    def __init__(self, message: str, line_number: int, line: str, source: str | None = None):
        where = f"{source}, line {line_number}" if source else f"line {line_number}"
        super().__init__(f"{where}: {message}: {line!r}")
        self.message = message
        self.line_number = line_number
        self.line = line
        self.source = source


@dataclass(frozen=True)
class RawTriple:
    subject: str
    relation: str
    object: str


def parse_triples(lines: Iterable[str]) -> list[RawTriple]:
    """Parse tab-separated triples from an iterable of text lines.

    Blank lines are skipped; anything else must be exactly three non-empty
    tab-separated fields. Raises TripleParseError with the 1-based line
    number on violation.
    """
    triples = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.rstrip("\r\n")
        if not stripped.strip():
            continue
        fields = stripped.split("\t")
        if len(fields) != 3:
            raise TripleParseError(
                f"expected 3 tab-separated fields, got {len(fields)}", lineno, stripped
            )
        subject, relation, obj = fields
        if not subject or not relation or not obj:
            raise TripleParseError("empty field", lineno, stripped)
        if relation.endswith(REVERSE_MARKER):
            raise TripleParseError(
                f"relation ends with reserved suffix {REVERSE_MARKER!r}", lineno, stripped
            )
        triples.append(RawTriple(subject, relation, obj))
    return triples


def load_triples(path) -> list[RawTriple]:
    with open(path, encoding="utf-8") as handle:
        try:
            return parse_triples(handle)
        except TripleParseError as exc:
            raise TripleParseError(exc.message, exc.line_number, exc.line, str(path)) from None


@dataclass
class Vocabulary:
    """Entity and relation lexicons, id-ordered by descending frequency.

    ``relation_labels`` covers both forward relations and their reverses;
    ``reverse_of`` is an involution over relation ids with no fixed points.
    """

    entity_labels: list[str]
    entity_freqs: np.ndarray
    relation_labels: list[str]
    relation_freqs: np.ndarray
    reverse_of: np.ndarray
    num_forward_relations: int
    entity_ids: dict = field(init=False, repr=False)
    relation_ids: dict = field(init=False, repr=False)
    is_reverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.entity_ids = {label: i for i, label in enumerate(self.entity_labels)}
        self.relation_ids = {label: i for i, label in enumerate(self.relation_labels)}
        self.is_reverse = np.array(
            [label.endswith(REVERSE_MARKER) for label in self.relation_labels], dtype=bool
        )
        self._check()

    def _check(self):
        if np.any(np.diff(self.entity_freqs) > 0) or np.any(np.diff(self.relation_freqs) > 0):
            raise ValueError("lexicon frequencies must be non-increasing in id order")
        rev = self.reverse_of
        if np.any(rev[rev] != np.arange(len(rev))) or np.any(rev == np.arange(len(rev))):
            raise ValueError("reverse map must be a fixed-point-free involution")

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    def reverse(self, relation_id: int) -> int:
        return int(self.reverse_of[relation_id])


def build_vocabulary(train: Sequence[RawTriple]) -> Vocabulary:
    """Build lexicons from the raw training triples.

    Entity frequency counts subject and object occurrences in the
    un-augmented training set; each reverse relation inherits its forward
    partner's frequency. Ids run in descending frequency order, ties broken
    by first appearance (reverse relations count as appearing after every
    forward one, in forward-appearance order).
    """
    if not train:
        raise ValueError("cannot build a vocabulary from an empty training set")

    entity_freq: Counter = Counter()
    entity_order: dict[str, int] = {}
    relation_freq: Counter = Counter()
    relation_order: dict[str, int] = {}
    for triple in train:
        for label in (triple.subject, triple.object):
            if label not in entity_order:
                entity_order[label] = len(entity_order)
            entity_freq[label] += 1
        if triple.relation not in relation_order:
            relation_order[triple.relation] = len(relation_order)
        relation_freq[triple.relation] += 1

    entity_labels = sorted(entity_order, key=lambda e: (-entity_freq[e], entity_order[e]))

    forward = list(relation_order)
    num_forward = len(forward)
    for label in forward:
        reverse_label = label + REVERSE_MARKER
        relation_freq[reverse_label] = relation_freq[label]
        relation_order[reverse_label] = relation_order[label] + num_forward
    relation_labels = sorted(
        relation_freq, key=lambda r: (-relation_freq[r], relation_order[r])
    )

    relation_ids = {label: i for i, label in enumerate(relation_labels)}
    reverse_of = np.empty(len(relation_labels), dtype=np.int32)
    for label in forward:
        fwd, rev = relation_ids[label], relation_ids[label + REVERSE_MARKER]
        reverse_of[fwd] = rev
        reverse_of[rev] = fwd

    return Vocabulary(
        entity_labels=entity_labels,
        entity_freqs=np.array([entity_freq[e] for e in entity_labels], dtype=np.int64),
        relation_labels=relation_labels,
        relation_freqs=np.array([relation_freq[r] for r in relation_labels], dtype=np.int64),
        reverse_of=reverse_of,
        num_forward_relations=num_forward,
    )


def index_triples(triples: Sequence[RawTriple], vocab: Vocabulary) -> np.ndarray:
    """Map label triples to an (n, 3) int32 id array; unknown labels raise."""
    out = np.empty((len(triples), 3), dtype=np.int32)
    for i, triple in enumerate(triples):
        try:
            out[i, 0] = vocab.entity_ids[triple.subject]
            out[i, 1] = vocab.relation_ids[triple.relation]
            out[i, 2] = vocab.entity_ids[triple.object]
        except KeyError as exc:
            raise ValueError(f"label not in vocabulary: {exc.args[0]!r}") from None
    return out


def deindex_triples(ids: np.ndarray, vocab: Vocabulary) -> list[RawTriple]:
    return [
        RawTriple(vocab.entity_labels[s], vocab.relation_labels[r], vocab.entity_labels[o])
        for s, r, o in np.asarray(ids)
    ]


def augment_reverse(triples: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Append the reverse orientation of every triple: originals first."""
    triples = np.asarray(triples, dtype=np.int32).reshape(-1, 3)
    if len(triples) == 0:
        return triples.copy()
    _check_bounds(triples, vocab)
    reversed_part = np.column_stack(
        [triples[:, 2], vocab.reverse_of[triples[:, 1]], triples[:, 0]]
    ).astype(np.int32)
    return np.concatenate([triples, reversed_part], axis=0)


def _check_bounds(triples: np.ndarray, vocab: Vocabulary):
    if len(triples) == 0:
        return
    if triples[:, [0, 2]].min() < 0 or triples[:, [0, 2]].max() >= vocab.num_entities:
        raise ValueError("entity id out of vocabulary bounds")
    if triples[:, 1].min() < 0 or triples[:, 1].max() >= vocab.num_relations:
        raise ValueError("relation id out of vocabulary bounds")


def _encode_pairs(subjects, relations, num_relations: int) -> np.ndarray:
    return np.asarray(subjects, dtype=np.int64) * num_relations + np.asarray(relations)


def _encode_triples(triples: np.ndarray, num_relations: int, num_entities: int) -> np.ndarray:
    t = np.asarray(triples, dtype=np.int64)
    return (t[:, 0] * num_relations + t[:, 1]) * num_entities + t[:, 2]


@dataclass
class IndexedDataset:
    """Integer-encoded splits plus the ranking/membership indexes.

    ``train`` holds both orientations (originals then reverses); valid and
    test stay forward-only and are queried in both directions at evaluation
    time. Instances are immutable after construction and safe to share.
    """

    vocab: Vocabulary
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    num_raw_train: int
    _answer_keys: np.ndarray = field(init=False, repr=False)
    _answer_objects: np.ndarray = field(init=False, repr=False)
    correct_keys: np.ndarray = field(init=False, repr=False)
    predict_keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vocab = self.vocab
        for split in (self.train, self.valid, self.test):
            _check_bounds(split, vocab)
        both = [self.train]
        for split in (self.valid, self.test):
            both.append(split)
            both.append(augment_reverse(split, vocab)[len(split):])
        eval_parts = both[1:]
        all_triples = np.concatenate([part for part in both if len(part)]) if any(
            len(p) for p in both
        ) else np.empty((0, 3), dtype=np.int32)

        keys = _encode_pairs(all_triples[:, 0], all_triples[:, 1], vocab.num_relations)
        order = np.lexsort((all_triples[:, 2], keys))
        self._answer_keys = keys[order]
        self._answer_objects = all_triples[order, 2].astype(np.int32)

        self.correct_keys = np.unique(
            _encode_triples(all_triples, vocab.num_relations, vocab.num_entities)
        )
        eval_triples = (
            np.concatenate([part for part in eval_parts if len(part)])
            if any(len(p) for p in eval_parts)
            else np.empty((0, 3), dtype=np.int32)
        )
        self.predict_keys = np.unique(
            _encode_triples(eval_triples, vocab.num_relations, vocab.num_entities)
        )

    def split(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def known_answers(self, subject: int, relation: int) -> np.ndarray:
        """All objects o with (subject, relation, o) in any split; may be empty."""
        key = subject * self.vocab.num_relations + relation
        lo = np.searchsorted(self._answer_keys, key, side="left")
        hi = np.searchsorted(self._answer_keys, key, side="right")
        return np.unique(self._answer_objects[lo:hi])


def index_dataset(
    train: Sequence[RawTriple],
    valid: Sequence[RawTriple] = (),
    test: Sequence[RawTriple] = (),
    vocab: Vocabulary | None = None,
) -> IndexedDataset:
    vocab = vocab or build_vocabulary(train)
    train_ids = index_triples(train, vocab)
    return IndexedDataset(
        vocab=vocab,
        train=augment_reverse(train_ids, vocab),
        valid=index_triples(valid, vocab),
        test=index_triples(test, vocab),
        num_raw_train=len(train_ids),
    )


def batch_iterator(triples: np.ndarray, batch_size: int, seed):
    """Yield one epoch of shuffled batches; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    triples = np.asarray(triples)
    perm = np.random.default_rng(seed).permutation(len(triples))
    for start in range(0, len(triples), batch_size):
        yield triples[perm[start : start + batch_size]]


@dataclass(frozen=True)
class InverseAuditRow:
    train_relation: int
    test_relation: int
    overlap: int
    exposed_fraction: float


def audit_inverse_pairs(dataset: IndexedDataset) -> list[InverseAuditRow]:
    """Swap-overlap between forward relations of train and test.

    For each ordered pair (r1, r2) counts test triples (o, r2, s) whose
    swapped pair (s, r1, o) is a training triple, and the fraction of r2's
    test triples so exposed. Pairs with zero overlap are omitted.
    """
    vocab = dataset.vocab
    originals = dataset.train[: dataset.num_raw_train]
    pair_index: dict[int, list[int]] = {}
    num_entities = vocab.num_entities
    for s, r, o in originals:
        pair_index.setdefault(int(s) * num_entities + int(o), []).append(int(r))

    counts: Counter = Counter()
    test_totals: Counter = Counter(int(r) for r in dataset.test[:, 1])
    for a, r2, b in dataset.test:
        for r1 in pair_index.get(int(b) * num_entities + int(a), ()):
            counts[(r1, int(r2))] += 1

    rows = [
        InverseAuditRow(r1, r2, n, n / test_totals[r2])
        for (r1, r2), n in counts.items()
    ]
    rows.sort(key=lambda row: (-row.exposed_fraction, -row.overlap, row.train_relation, row.test_relation))
    return rows


def write_inverse_audit(rows: list[InverseAuditRow], vocab: Vocabulary, handle: IO[str]):
    for row in rows:
        handle.write(
            f"{vocab.relation_labels[row.train_relation]}\t"
            f"{vocab.relation_labels[row.test_relation]}\t"
            f"{row.overlap}\t{row.exposed_fraction:.6f}\n"
        )


def dataset_stats(dataset: IndexedDataset) -> dict:
    return {
        "entities": dataset.vocab.num_entities,
        "relations": dataset.vocab.num_forward_relations,
        "relations_with_reverse": dataset.vocab.num_relations,
        "train": dataset.num_raw_train,
        "valid": len(dataset.valid),
        "test": len(dataset.test),
        "train_sequences": len(dataset.train),
    }


def _write_str(buf, text: str):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _read_str(buf) -> str:
    (length,) = struct.unpack("<I", buf.read(4))
    return buf.read(length).decode("utf-8")


def _write_array(buf, array: np.ndarray, dtype: str):
    buf.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def _read_array(buf, count: int, dtype: str) -> np.ndarray:
    itemsize = np.dtype(dtype).itemsize
    return np.frombuffer(buf.read(count * itemsize), dtype=dtype).copy()


def save_dataset(dataset: IndexedDataset, path):
    """Serialize vocabulary and raw splits to the versioned binary cache."""
    vocab = dataset.vocab
    with open(path, "wb") as buf:
        buf.write(CACHE_MAGIC)
        buf.write(
            struct.pack(
                "<6I",
                vocab.num_entities,
                vocab.num_relations,
                vocab.num_forward_relations,
                dataset.num_raw_train,
                len(dataset.valid),
                len(dataset.test),
            )
        )
        for label in vocab.entity_labels:
            _write_str(buf, label)
        _write_array(buf, vocab.entity_freqs, "<u8")
        for label in vocab.relation_labels:
            _write_str(buf, label)
        _write_array(buf, vocab.relation_freqs, "<u8")
        _write_array(buf, vocab.reverse_of, "<u4")
        _write_array(buf, dataset.train[: dataset.num_raw_train], "<u4")
        _write_array(buf, dataset.valid, "<u4")
        _write_array(buf, dataset.test, "<u4")


def load_dataset(path) -> IndexedDataset:
    with open(path, "rb") as buf:
        magic = buf.read(len(CACHE_MAGIC))
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: not a dataset cache (bad magic {magic!r})")
        num_entities, num_relations, num_forward, n_train, n_valid, n_test = struct.unpack(
            "<6I", buf.read(24)
        )
        entity_labels = [_read_str(buf) for _ in range(num_entities)]
        entity_freqs = _read_array(buf, num_entities, "<u8").astype(np.int64)
        relation_labels = [_read_str(buf) for _ in range(num_relations)]
        relation_freqs = _read_array(buf, num_relations, "<u8").astype(np.int64)
        reverse_of = _read_array(buf, num_relations, "<u4").astype(np.int32)
        train = _read_array(buf, n_train * 3, "<u4").astype(np.int32).reshape(-1, 3)
        valid = _read_array(buf, n_valid * 3, "<u4").astype(np.int32).reshape(-1, 3)
        test = _read_array(buf, n_test * 3, "<u4").astype(np.int32).reshape(-1, 3)

    vocab = Vocabulary(
        entity_labels=entity_labels,
        entity_freqs=entity_freqs,
        relation_labels=relation_labels,
        relation_freqs=relation_freqs,
        reverse_of=reverse_of,
        num_forward_relations=num_forward,
    )
    return IndexedDataset(
        vocab=vocab,
        train=augment_reverse(train, vocab),
        valid=valid,
        test=test,
        num_raw_train=n_train,
    )
