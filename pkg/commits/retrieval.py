"""TF-IDF diff-to-diff retrieval of the nearest training commit message."""
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from scipy import sparse

from .exceptions import ConfigMismatch, EmptyIndex, MissingArtifact

logger = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1


@dataclass
class IndexedDiff:
    commit_id: str
    diff_tokens: List[str]
    message: List[str]


@dataclass
class RetrievalResult:
    message: List[str]
    commit_id: str
    cosine: float
    doc_index: int


class TfIdfIndex:
    """Sparse tf-idf rows of the indexed diffs with their L2 norms.

    tf is the raw count over the document length and idf = ln(N / df) without
    smoothing, so a token present in every document weighs nothing.
    """

    def __init__(self, columns: Dict[str, int], df: np.ndarray, matrix: sparse.csr_matrix,
                 messages: List[List[str]], commit_ids: List[str]):
        self.columns = columns
        self.df = df
        self.matrix = matrix
        self.messages = messages
        self.commit_ids = commit_ids
        self.idf = np.log(len(commit_ids) / df) if len(df) else np.zeros(0)
        self.norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())

    def __len__(self) -> int:
        return len(self.commit_ids)

    @property
    def n_diff(self) -> int:
        return len(self.commit_ids)

    def vectorize(self, tokens: Sequence[str]) -> sparse.csr_matrix:
        """tf-idf row of a query; tokens unknown to the index are dropped."""
        counts = Counter(token for token in tokens if token in self.columns)
        total = sum(counts.values())
        row = sparse.csr_matrix((1, len(self.columns)), dtype=np.float64)
        if not total:
            return row
        cols = np.array([self.columns[token] for token in counts], dtype=np.int64)
        values = np.array([counts[token] / total for token in counts], dtype=np.float64) * self.idf[cols]
        return sparse.csr_matrix((values, (np.zeros(len(cols), dtype=np.int64), cols)), shape=row.shape)

    def similarities(self, tokens: Sequence[str]) -> np.ndarray:
        """Cosine of the query against every document; 0 where either norm is 0."""
        if not len(self):
            raise EmptyIndex('The retrieval index holds no documents')
        query = self.vectorize(tokens)
        query_norm = float(np.sqrt(query.multiply(query).sum()))
        dots = np.asarray((self.matrix @ query.T).todense()).ravel()
        denominator = self.norms * query_norm
        sims = np.divide(dots, denominator, out=np.zeros_like(dots), where=denominator > 0)
        return np.clip(sims, 0.0, 1.0)

    def _best(self, sims: np.ndarray) -> RetrievalResult:
        # argmax returns the lowest index among ties
        best = int(np.argmax(sims))
        return RetrievalResult(self.messages[best], self.commit_ids[best], float(max(sims[best], 0.0)), best)

    def retrieve(self, tokens: Sequence[str]) -> RetrievalResult:
        return self._best(self.similarities(tokens))

    def retrieve_excluding(self, tokens: Sequence[str], excluded_commit_id: str) -> RetrievalResult:
        sims = self.similarities(tokens)
        excluded = [i for i, commit_id in enumerate(self.commit_ids) if commit_id == excluded_commit_id]
        if len(excluded) == len(self):
            raise EmptyIndex(f"Excluding {excluded_commit_id} leaves no document to retrieve")
        sims[excluded] = -np.inf
        return self._best(sims)

    def save(self, path) -> None:
        tokens = sorted(self.columns, key=self.columns.get)
        np.savez(
            path,
            header=np.array([INDEX_FORMAT_VERSION, self.n_diff, len(self.columns)], dtype=np.int64),
            tokens=np.array(tokens, dtype=str),
            df=self.df,
            data=self.matrix.data,
            indices=self.matrix.indices,
            indptr=self.matrix.indptr,
            messages=np.array([json.dumps(message) for message in self.messages], dtype=str),
            commit_ids=np.array(self.commit_ids, dtype=str),
        )

    @classmethod
    def load(cls, path) -> 'TfIdfIndex':
        path = Path(path)
        if not path.exists():
            raise MissingArtifact('index', str(path))
        with np.load(path, allow_pickle=False) as archive:
            version, n_diff, vocab_size = (int(value) for value in archive['header'])
            if version != INDEX_FORMAT_VERSION:
                raise ConfigMismatch(f"Unsupported index version {version}")
            columns = {str(token): i for i, token in enumerate(archive['tokens'])}
            matrix = sparse.csr_matrix((archive['data'], archive['indices'], archive['indptr']),
                                       shape=(n_diff, vocab_size))
            return cls(columns, archive['df'], matrix,
                       [json.loads(str(message)) for message in archive['messages']],
                       [str(commit_id) for commit_id in archive['commit_ids']])


def build_index(documents: Sequence[IndexedDiff]) -> TfIdfIndex:
    """Index training diffs; tokens are case-sensitive, added and deleted concatenated."""
    if not documents:
        raise EmptyIndex('Cannot build an index from an empty training set')
    columns: Dict[str, int] = {}
    rows, cols, counts = [], [], []
    for row, document in enumerate(documents):
        for token, count in Counter(document.diff_tokens).items():
            rows.append(row)
            cols.append(columns.setdefault(token, len(columns)))
            counts.append(count)
    shape = (len(documents), len(columns))
    term_counts = sparse.csr_matrix(
        (np.array(counts, dtype=np.float64), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=shape,
    )
    df = np.bincount(np.array(cols, dtype=np.int64), minlength=len(columns)).astype(np.float64)
    lengths = np.asarray(term_counts.sum(axis=1)).ravel()
    inverse_lengths = np.divide(1.0, lengths, out=np.zeros_like(lengths), where=lengths > 0)
    idf = np.log(len(documents) / df) if len(df) else np.zeros(0)
    if len(columns):
        matrix = sparse.csr_matrix(sparse.diags(inverse_lengths) @ term_counts @ sparse.diags(idf))
        matrix.eliminate_zeros()
        matrix.sort_indices()
    else:
        matrix = term_counts
    index = TfIdfIndex(columns, df, matrix, [list(d.message) for d in documents], [d.commit_id for d in documents])
    logger.info("Indexed %d diffs over %d distinct tokens", len(documents), len(columns))
    return index


def load_index(path) -> TfIdfIndex:
    return TfIdfIndex.load(path)


def retrieve(index: TfIdfIndex, tokens: Sequence[str]) -> RetrievalResult:
    return index.retrieve(tokens)


def retrieve_excluding(index: TfIdfIndex, tokens: Sequence[str], excluded_commit_id: str) -> RetrievalResult:
    return index.retrieve_excluding(tokens, excluded_commit_id)
