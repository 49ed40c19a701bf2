"""Relevance ranking of retrieved and generated messages with a ConvNet over a matching matrix."""
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import autodiff as ad
from .ast2seq import Ast2Seq
from .autodiff import Tensor
from .config import RankerConfig, rng_stream
from .exceptions import CommitsError, EmptyMessage, EmptyTrainingSet
from .layers import Linear
from .metrics import bleu
from .models import CandidatePair
from .params import ParamStore
from .preprocess import PAD_INDEX, Example, Vocabulary
from .retrieval import TfIdfIndex
from .training import TrainingReport, fit, mean_loss

logger = logging.getLogger(__name__)

CANDIDATE_SOURCES = ('retrieved', 'generated')


class Ranker(Protocol):
    def score(self, diff_tokens: Sequence[str], msg_tokens: Sequence[str], commit_id: str = '') -> float:
        ...


def matching_matrix(diff_embeddings: Tensor, msg_embeddings: Tensor) -> Tensor:
    """D = E(d) E(y)^T; leading batch axes are kept."""
    axes = tuple(range(msg_embeddings.ndim - 2)) + (msg_embeddings.ndim - 1, msg_embeddings.ndim - 2)
    return ad.matmul(diff_embeddings, ad.transpose(msg_embeddings, axes))


def pooled_size(length: int, pool: int, stride: int) -> int:
    return (length - pool) // stride + 1


class ConvNetRanker:
    """Embeddings -> matching matrix -> conv + ReLU -> max-pool -> linear scalar."""

    def __init__(self, config: RankerConfig, vocabularies: Dict[str, Vocabulary], seed: int = 13):
        self.config = config
        self.diff_vocab = vocabularies['diff']
        self.message_vocab = vocabularies['message']
        self.store = ParamStore()
        rng = rng_stream(seed, 'ranker:init')
        emb, size = config.embedding_size, config.kernel_size
        self.diff_embedding = self.store.add('ranker.diff_embedding', (len(self.diff_vocab), emb), rng=rng)
        self.message_embedding = self.store.add('ranker.message_embedding', (len(self.message_vocab), emb), rng=rng)
        self.kernels = self.store.add('ranker.conv.kernels', (config.kernels, 1, size, size), rng=rng,
                                      fan=(size * size, config.kernels * size * size))
        self.conv_bias = self.store.add('ranker.conv.b', (config.kernels,), init='zeros')
        features = (config.kernels * pooled_size(config.max_diff_len, config.pool, config.stride)
                    * pooled_size(config.max_msg_len, config.pool, config.stride))
        self.head = Linear(self.store, 'ranker.head', features, 1, rng=rng)

    def encode(self, diff_tokens: Sequence[str], msg_tokens: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """Index rows truncated from the front and right-padded to the matrix size."""
        if not diff_tokens or not msg_tokens:
            raise EmptyMessage('Matching needs non-empty diff and message tokens')
        diff_ids = np.full(self.config.max_diff_len, PAD_INDEX, dtype=np.int64)
        msg_ids = np.full(self.config.max_msg_len, PAD_INDEX, dtype=np.int64)
        diff = self.diff_vocab.encode(diff_tokens[:self.config.max_diff_len])
        message = self.message_vocab.encode(msg_tokens[:self.config.max_msg_len])
        diff_ids[:len(diff)] = diff
        msg_ids[:len(message)] = message
        return diff_ids, msg_ids

    def matching_matrix(self, diff_tokens: Sequence[str], msg_tokens: Sequence[str], pad: bool = True) -> Tensor:
        if not diff_tokens or not msg_tokens:
            raise EmptyMessage('Matching needs non-empty diff and message tokens')
        if pad:
            diff_ids, msg_ids = self.encode(diff_tokens, msg_tokens)
        else:
            diff_ids = self.diff_vocab.encode(diff_tokens[:self.config.max_diff_len])
            msg_ids = self.message_vocab.encode(msg_tokens[:self.config.max_msg_len])
        return matching_matrix(ad.embedding_lookup(self.diff_embedding, diff_ids),
                               ad.embedding_lookup(self.message_embedding, msg_ids))

    def forward(self, diff_ids: np.ndarray, msg_ids: np.ndarray) -> Tensor:
        """Scores (B,) for index batches (B, max_diff_len) and (B, max_msg_len)."""
        batch = diff_ids.shape[0]
        D = matching_matrix(ad.embedding_lookup(self.diff_embedding, diff_ids),
                            ad.embedding_lookup(self.message_embedding, msg_ids))
        D = ad.reshape(D, (batch, 1) + D.shape[1:])
        features = ad.relu(ad.conv_2d(D, self.kernels, self.conv_bias))
        pool, stride = (self.config.pool,) * 2, (self.config.stride,) * 2
        pooled = ad.max_pool_2d(features, pool, stride)
        return ad.reshape(self.head(ad.reshape(pooled, (batch, -1))), (batch,))

    def score(self, diff_tokens: Sequence[str], msg_tokens: Sequence[str], commit_id: str = '') -> float:
        diff_ids, msg_ids = self.encode(diff_tokens, msg_tokens)
        with ad.no_grad():
            return float(self.forward(diff_ids[None], msg_ids[None]).data[0])


class OracleRanker:
    """Scores a candidate by its BLEU-4 against the known reference of the commit."""

    def __init__(self, references: Dict[str, List[str]]):
        self.references = references

    @classmethod
    def from_examples(cls, examples: Sequence[Example]) -> 'OracleRanker':
        return cls({example.commit_id: example.target.tokens for example in examples})

    def score(self, diff_tokens: Sequence[str], msg_tokens: Sequence[str], commit_id: str = '') -> float:
        if not msg_tokens:
            raise EmptyMessage('Cannot score an empty candidate')
        return bleu(msg_tokens, self.references[commit_id]) / 100.0


def _safe_score(ranker: Ranker, diff_tokens: Sequence[str], msg_tokens: Sequence[str], commit_id: str) -> float:
    # an empty candidate can never win
    try:
        return ranker.score(diff_tokens, msg_tokens, commit_id=commit_id)
    except EmptyMessage:
        return -math.inf


def select(diff_tokens: Sequence[str], msg_t: Sequence[str], msg_g: Sequence[str], ranker: Ranker,
           commit_id: str = '') -> CandidatePair:
    return CandidatePair(
        diff_tokens=list(diff_tokens),
        msg_t=list(msg_t),
        msg_g=list(msg_g),
        score_t=_safe_score(ranker, diff_tokens, msg_t, commit_id),
        score_g=_safe_score(ranker, diff_tokens, msg_g, commit_id),
        commit_id=commit_id,
    )


# ranking dataset

@dataclass
class RankingRow:
    commit_id: str
    source: str
    diff_tokens: List[str]
    candidate: List[str]
    target: float

    def to_dict(self):
        return asdict(self)


@dataclass
class RankingDataset:
    rows: List[RankingRow] = field(default_factory=list)
    skipped: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)


def build_ranking_dataset(examples: Sequence[Example], model: Ast2Seq, index: TfIdfIndex,
                          beam_width: Optional[int] = None, progress: bool = False) -> RankingDataset:
    """Two rows per training commit: its generated and its nearest-other retrieved message.

    The target is BLEU-4 of the candidate against the commit's message, scaled to [0, 1].
    Commits whose candidates cannot be built are skipped and counted by error type.
    """
    dataset = RankingDataset()
    for example in tqdm(examples, desc='ranking dataset', disable=not progress):
        reference = example.target.tokens
        if not example.diff_tokens:
            dataset.skipped['EmptyMessage'] = dataset.skipped.get('EmptyMessage', 0) + 1
            logger.warning("Skipping %s in the ranking dataset: no diff tokens", example.commit_id)
            continue
        try:
            candidates = {
                'retrieved': index.retrieve_excluding(example.diff_tokens, example.commit_id).message,
                'generated': model.generate(example.contexts, beam_width=beam_width),
            }
        except CommitsError as exc:
            name = type(exc).__name__
            dataset.skipped[name] = dataset.skipped.get(name, 0) + 1
            logger.warning("Skipping %s in the ranking dataset: %s", example.commit_id, exc)
            continue
        for source in CANDIDATE_SOURCES:
            candidate = candidates[source]
            if not candidate:
                dataset.skipped['EmptyMessage'] = dataset.skipped.get('EmptyMessage', 0) + 1
                continue
            dataset.rows.append(RankingRow(example.commit_id, source, list(example.diff_tokens),
                                           list(candidate), bleu(candidate, reference) / 100.0))
    logger.info("Ranking dataset: %d rows, skipped %s", len(dataset.rows), dataset.skipped or 'none')
    return dataset


def build_ranker_vocab(rows: Sequence[RankingRow], min_freq: int = 1) -> Dict[str, Vocabulary]:
    diff_counts: Counter = Counter()
    message_counts: Counter = Counter()
    for row in rows:
        diff_counts.update(row.diff_tokens)
        message_counts.update(row.candidate)
    return {
        'diff': Vocabulary.from_counts('diff', diff_counts, min_freq),
        'message': Vocabulary.from_counts('message', message_counts, min_freq),
    }


def _encode_rows(ranker: ConvNetRanker, rows: Sequence[RankingRow]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    encoded = [ranker.encode(row.diff_tokens, row.candidate) for row in rows]
    return (np.stack([diff for diff, _ in encoded]), np.stack([msg for _, msg in encoded]),
            np.array([row.target for row in rows]))


def train_ranker(ranker: ConvNetRanker, rows: Sequence[RankingRow], seed: int = 13,
                 checkpoint_path=None, progress: bool = False) -> TrainingReport:
    """Adam on the squared error between predicted and BLEU-derived relevance."""
    usable = [row for row in rows if row.diff_tokens and row.candidate]
    if len(usable) < len(rows):
        logger.warning("Ignoring %d ranking rows with an empty diff or candidate", len(rows) - len(usable))
    rows = usable
    if not rows:
        raise EmptyTrainingSet('The ranker needs at least one ranking row')
    config = ranker.config
    order = rng_stream(seed, 'ranker:valid').permutation(len(rows))
    valid_count = int(round(len(rows) * config.valid_fraction)) if len(rows) > 1 else 0
    valid_rows = [rows[i] for i in order[:valid_count]]
    train_rows = [rows[i] for i in order[valid_count:]]
    diff_ids, msg_ids, targets = _encode_rows(ranker, train_rows)
    valid = _encode_rows(ranker, valid_rows) if valid_rows else (diff_ids, msg_ids, targets)

    def train_step(indices: np.ndarray) -> float:
        loss = ad.mse(ranker.forward(diff_ids[indices], msg_ids[indices]), targets[indices])
        loss.backward()
        return loss.item()

    def valid_loss() -> float:
        losses, weights = [], []
        with ad.no_grad():
            for start in range(0, len(valid[2]), config.batch_size):
                part = slice(start, start + config.batch_size)
                losses.append(ad.mse(ranker.forward(valid[0][part], valid[1][part]), valid[2][part]).item())
                weights.append(len(valid[2][part]))
        return mean_loss(losses, weights)

    report = fit(
        ranker.store, train_step, valid_loss, count=len(train_rows), epochs=config.epochs,
        batch_size=config.batch_size, patience=config.patience, lr=config.lr,
        rng=rng_stream(seed, 'ranker:batches'), checkpoint_path=checkpoint_path,
        desc='train_rank', progress=progress,
    )
    logger.info("Ranker trained for %d epochs (best %d, loss %.4f)",
                report.epochs_run, report.best_epoch, report.best_valid_loss)
    return report
