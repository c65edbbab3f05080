"""LETOR / SVMrank files, folds, and query resampling.

Each line reads ``<label> qid:<id> <idx>:<val> ... [# comment]`` with
1-based feature indices. Missing features are 0.
"""

from __future__ import annotations

import io
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import EmptyInput, ParseError

_DOCID = re.compile(r"\bdoc(?:id)?\s*=\s*(\S+)")


@dataclass
class Document:
    features: np.ndarray
    relevance: int
    doc_id: Optional[str] = None


@dataclass
class Query:
    """Documents of one query, stored column-wise.

    ``features`` is ``(J, M)``, ``relevance`` holds integer labels.
    """

    qid: str
    features: np.ndarray
    relevance: np.ndarray
    doc_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.relevance = np.asarray(self.relevance, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"query {self.qid} needs at least one document")
        if self.relevance.shape != (self.features.shape[0],):
            raise ValueError(f"query {self.qid}: one label per document required")
        if not self.doc_ids:
            self.doc_ids = [None] * len(self)

    def __len__(self):
        return self.features.shape[0]

    @property
    def documents(self):
        return [Document(x, int(r), d)
                for x, r, d in zip(self.features, self.relevance, self.doc_ids)]

    @classmethod
    def from_documents(cls, qid, documents):
        docs = list(documents)
        return cls(qid,
                   np.stack([d.features for d in docs]),
                   np.array([d.relevance for d in docs]),
                   [d.doc_id for d in docs])


@dataclass
class DataSplit:
    train: list
    validation: list
    test: list

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            qids = [q.qid for q in getattr(self, name)]
            if len(set(qids)) != len(qids):
                raise ValueError(f"duplicate qid in {name} split")


def _parse_line(line, lineno):
    body, _, comment = line.partition("#")
    tokens = body.split()
    if not tokens:
        return None
    try:
        label = int(tokens[0])
    except ValueError:
        raise ParseError(f"bad relevance label {tokens[0]!r}", lineno) from None
    if label < 0:
        raise ParseError(f"negative relevance label {label}", lineno)
    if len(tokens) < 2 or not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
        raise ParseError("expected qid:<id> after the label", lineno)
    qid = tokens[1][4:]
    feats = {}
    for tok in tokens[2:]:
        idx, sep, val = tok.partition(":")
        try:
            if not sep:
                raise ValueError
            idx, val = int(idx), float(val)
        except ValueError:
            raise ParseError(f"bad feature token {tok!r}", lineno) from None
        if idx < 1:
            raise ParseError(f"feature index {idx} must be >= 1", lineno)
        feats[idx] = val
    m = _DOCID.search(comment)
    return label, qid, feats, (m.group(1) if m else None)


def parse_letor(lines: Iterable[str]) -> list:
    """Parse LETOR lines into queries.

    Queries appear in order of first occurrence and documents keep file
    order. All queries share the width ``M`` given by the largest feature
    index in the input.
    """
    if isinstance(lines, str):
        lines = io.StringIO(lines)
    grouped = {}
    width = 0
    for lineno, line in enumerate(lines, start=1):
        parsed = _parse_line(line, lineno)
        if parsed is None:
            continue
        label, qid, feats, doc_id = parsed
        width = max(width, max(feats, default=0))
        grouped.setdefault(qid, []).append((label, feats, doc_id))
    if not grouped:
        raise EmptyInput("no queries")
    queries = []
    for qid, rows in grouped.items():
        X = np.zeros((len(rows), width))
        for i, (_, feats, _) in enumerate(rows):
            for idx, val in feats.items():
                X[i, idx - 1] = val
        queries.append(Query(qid, X, [r[0] for r in rows], [r[2] for r in rows]))
    return queries


def read_letor(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_letor(fh)


def format_letor(queries) -> str:
    out = []
    for q in queries:
        for x, r, doc_id in zip(q.features, q.relevance, q.doc_ids):
            feats = " ".join(f"{i}:{float(v)!r}" for i, v in enumerate(x, start=1))
            line = f"{int(r)} qid:{q.qid} {feats}".rstrip()
            if doc_id is not None:
                line += f" # docid = {doc_id}"
            out.append(line)
    return "\n".join(out) + "\n"


def write_letor(queries, path):
    Path(path).write_text(format_letor(queries), encoding="utf-8")


def _pad_width(queries, width):
    for q in queries:
        if q.features.shape[1] < width:
            pad = np.zeros((len(q), width - q.features.shape[1]))
            q.features = np.hstack([q.features, pad])
    return queries


def load_fold(directory) -> DataSplit:
    """Read ``train.txt``, ``vali.txt`` and ``test.txt`` from a fold directory."""
    d = Path(directory)
    train, vali, test = (read_letor(d / name)
                         for name in ("train.txt", "vali.txt", "test.txt"))
    width = max(q.features.shape[1] for q in train + vali + test)
    return DataSplit(*(_pad_width(qs, width) for qs in (train, vali, test)))


class MinMaxScaler:
    """Per-feature min-max scaling fitted on one set of queries."""

    def fit(self, queries):
        X = np.vstack([q.features for q in queries])
        self.low = X.min(axis=0)
        span = X.max(axis=0) - self.low
        self.span = np.where(span > 0, span, 1.0)
        return self

    def transform(self, queries):
        return [Query(q.qid, (q.features - self.low) / self.span,
                      q.relevance.copy(), list(q.doc_ids))
                for q in queries]


def resample_queries(queries, per_query: int = 20, max_docs: int = 200,
                     seed: int = 0) -> list:
    """Bootstrap each query into ``per_query`` smaller derived queries.

    Derived sizes are Poisson with mean ``min(J, max_docs)``, clamped to
    ``[1, max_docs]``; documents are drawn with replacement. Every derived
    query has its own generator keyed by ``(seed, source index, qid,
    replica)``.
    """
    if per_query < 1:
        raise ValueError("per_query must be >= 1")
    if max_docs < 1:
        raise ValueError("max_docs must be >= 1")
    derived = []
    for i, q in enumerate(queries):
        J = len(q)
        qkey = zlib.crc32(q.qid.encode("utf-8"))
        for t in range(per_query):
            rng = np.random.default_rng([seed, i, qkey, t])
            size = int(np.clip(rng.poisson(min(J, max_docs)), 1, max_docs))
            pick = rng.integers(0, J, size=size)
            derived.append(Query(f"{q.qid}_{t}", q.features[pick],
                                 q.relevance[pick], [q.doc_ids[k] for k in pick]))
    return derived
