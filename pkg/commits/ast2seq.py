"""AST-path encoder and attentional LSTM decoder for commit messages."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .ast_paths import AstPath, PathContextSet
from .autodiff import Tensor
from .config import ModelConfig, rng_stream
from .exceptions import EmptyContext, EmptyTrainingSet
from .layers import LSTM, Linear
from .models import POLARITIES
from .params import ParamStore
from .preprocess import EOS_INDEX, PAD_INDEX, SOS_INDEX, UNK_INDEX, Example, Vocabulary, split_subtokens
from .training import TrainingReport, fit, mean_loss

logger = logging.getLogger(__name__)


@dataclass
class PreparedExample:
    commit_id: str
    node_ids: List[List[int]]
    start_ids: List[List[int]]
    end_ids: List[List[int]]
    deleted: List[bool]
    target_ids: List[int]


@dataclass
class PathBatch:
    node_ids: np.ndarray
    node_mask: np.ndarray
    start_ids: np.ndarray
    start_mask: np.ndarray
    end_ids: np.ndarray
    end_mask: np.ndarray
    deleted: np.ndarray
    # (B, P) rows of the flat path list per example; padding points one past the end
    gather: np.ndarray
    mask: np.ndarray


@dataclass
class EncodedDiff:
    Z: Tensor
    h0: Tensor
    mask: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.mask.shape[0]

    def repeat(self, count: int) -> 'EncodedDiff':
        """Inference-only copy of a single encoded diff for ``count`` beam hypotheses."""
        return EncodedDiff(Tensor(np.repeat(self.Z.data, count, axis=0)),
                           Tensor(np.repeat(self.h0.data, count, axis=0)),
                           np.repeat(self.mask, count, axis=0))


@dataclass
class DecodeStep:
    logits: Tensor
    state: Tuple[Tensor, Tensor]
    alpha: Tensor


def _pad(rows: Sequence[Sequence[int]], width: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    width = width if width is not None else max((len(row) for row in rows), default=0)
    ids = np.full((len(rows), max(width, 1)), PAD_INDEX, dtype=np.int64)
    mask = np.zeros(ids.shape, dtype=bool)
    for i, row in enumerate(rows):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = True
    return ids, mask


class Ast2Seq:
    """Bi-LSTM path encoder fused with leaf subtoken sums, and a Luong-attention decoder."""

    def __init__(self, config: ModelConfig, vocabularies: Dict[str, Vocabulary], seed: int = 13):
        self.config = config
        self.vocabularies = vocabularies
        self.node_vocab = vocabularies['node_type']
        self.subtoken_vocab = vocabularies['subtoken']
        self.target_vocab = vocabularies['target']
        self.store = ParamStore()
        self.dropout_rng = rng_stream(seed, 'ast2seq:dropout')
        rng = rng_stream(seed, 'ast2seq:init')
        emb, hidden = config.embedding_size, config.hidden_size
        store = self.store

        self.node_embedding = store.add('encoder.node_embedding', (len(self.node_vocab), emb), rng=rng)
        if config.polarity_embeddings == 'separate':
            self.subtoken_embeddings = {
                polarity: store.add(f"encoder.subtoken_embedding.{polarity}", (len(self.subtoken_vocab), emb), rng=rng)
                for polarity in POLARITIES
            }
        else:
            shared = store.add('encoder.subtoken_embedding', (len(self.subtoken_vocab), emb), rng=rng)
            self.subtoken_embeddings = {polarity: shared for polarity in POLARITIES}
        self.path_forward = LSTM(store, 'encoder.path_forward', emb, hidden // 2, rng=rng)
        self.path_backward = LSTM(store, 'encoder.path_backward', emb, hidden // 2, rng=rng)
        self.fuse = Linear(store, 'encoder.fuse', 2 * emb + hidden, hidden, rng=rng)

        self.target_embedding = store.add('decoder.embedding', (len(self.target_vocab), emb), rng=rng)
        self.decoder = LSTM(store, 'decoder.lstm', emb, hidden, rng=rng)
        self.W_a = store.add('decoder.attention', (hidden, hidden), rng=rng)
        self.W_c = store.add('decoder.combine', (2 * hidden, hidden), rng=rng)
        self.W_s = store.add('decoder.output', (hidden, len(self.target_vocab)), rng=rng)

    # data preparation

    def _leaf_ids(self, leaf: str) -> List[int]:
        return self.subtoken_vocab.encode(split_subtokens(leaf)) or [UNK_INDEX]

    def prepare_contexts(self, contexts: PathContextSet, commit_id: str = '',
                         target: Sequence[str] = ()) -> PreparedExample:
        prepared = PreparedExample(commit_id, [], [], [], [], self.target_vocab.encode(target))
        for polarity in POLARITIES:
            for path in contexts.paths(polarity):
                prepared.node_ids.append(self.node_vocab.encode(node.name for node in path.node_sequence))
                prepared.start_ids.append(self._leaf_ids(path.start_leaf))
                prepared.end_ids.append(self._leaf_ids(path.end_leaf))
                prepared.deleted.append(polarity == 'deleted')
        if not prepared.node_ids:
            raise EmptyContext(f"{commit_id or 'diff'} has no path to encode")
        return prepared

    def prepare(self, example: Example) -> PreparedExample:
        return self.prepare_contexts(example.contexts, example.commit_id, example.target.tokens)

    @staticmethod
    def batch_paths(examples: Sequence[PreparedExample]) -> PathBatch:
        node_rows, start_rows, end_rows, deleted = [], [], [], []
        counts = []
        for example in examples:
            node_rows.extend(example.node_ids)
            start_rows.extend(example.start_ids)
            end_rows.extend(example.end_ids)
            deleted.extend(example.deleted)
            counts.append(len(example.node_ids))
        total = len(node_rows)
        width = max(counts)
        gather = np.full((len(examples), width), total, dtype=np.int64)
        mask = np.zeros((len(examples), width), dtype=bool)
        offset = 0
        for b, count in enumerate(counts):
            gather[b, :count] = np.arange(offset, offset + count)
            mask[b, :count] = True
            offset += count
        node_ids, node_mask = _pad(node_rows)
        start_ids, start_mask = _pad(start_rows)
        end_ids, end_mask = _pad(end_rows)
        return PathBatch(node_ids, node_mask, start_ids, start_mask, end_ids, end_mask,
                         np.array(deleted, dtype=bool), gather, mask)

    # encoder

    def _leaf_features(self, ids: np.ndarray, mask: np.ndarray, deleted: np.ndarray) -> Tensor:
        """Sum of subtoken embeddings per leaf, from the table of the path's polarity."""
        selectors = {'added': ~deleted, 'deleted': deleted}
        tables = {}
        for polarity in POLARITIES:
            weights = (mask & selectors[polarity][:, None]).astype(ad.default_dtype())
            table = self.subtoken_embeddings[polarity]
            if not weights.any():
                continue
            tables.setdefault(id(table), [table, np.zeros_like(weights)])[1] += weights
        features = None
        for table, weights in tables.values():
            summed = ad.sum(ad.mul(ad.embedding_lookup(table, ids), weights[..., None]), axis=1)
            features = summed if features is None else ad.add(features, summed)
        if features is None:
            features = Tensor(np.zeros((ids.shape[0], self.config.embedding_size)))
        return features

    def _encode_rows(self, batch: PathBatch) -> Tensor:
        nodes = ad.embedding_lookup(self.node_embedding, batch.node_ids)
        _, forward_last = self.path_forward.run(nodes, batch.node_mask)
        _, backward_first = self.path_backward.run(nodes, batch.node_mask, reverse=True)
        path_features = ad.concat([backward_first, forward_last], axis=-1)
        start = self._leaf_features(batch.start_ids, batch.start_mask, batch.deleted)
        end = self._leaf_features(batch.end_ids, batch.end_mask, batch.deleted)
        return ad.tanh(self.fuse(ad.concat([start, path_features, end], axis=-1)))

    def encode(self, batch: PathBatch) -> EncodedDiff:
        rows = self._encode_rows(batch)
        padded = ad.concat([rows, Tensor(np.zeros((1, rows.shape[1])))], axis=0)
        Z = ad.getitem(padded, batch.gather)
        weights = batch.mask.astype(ad.default_dtype())
        counts = weights.sum(axis=1, keepdims=True)
        h0 = ad.mul(ad.sum(ad.mul(Z, weights[..., None]), axis=1), 1.0 / counts)
        return EncodedDiff(Z, h0, batch.mask)

    def encode_path(self, path: AstPath, polarity: str = 'added') -> Tensor:
        contexts = PathContextSet(**{polarity: [path]})
        rows = self._encode_rows(self.batch_paths([self.prepare_contexts(contexts)]))
        return ad.reshape(rows, (rows.shape[1],))

    def encode_diff(self, contexts: PathContextSet) -> EncodedDiff:
        if contexts.p + contexts.k == 0:
            raise EmptyContext('encode_diff needs at least one path')
        return self.encode(self.batch_paths([self.prepare_contexts(contexts)]))

    # decoder

    def attention_step(self, h_t: Tensor, enc: EncodedDiff) -> Tuple[Tensor, Tensor]:
        """Bilinear scores h_t W_a Z_i over valid rows; returns (alpha, context)."""
        batch, rows = enc.mask.shape
        query = ad.reshape(ad.matmul(h_t, self.W_a), (batch, -1, 1))
        scores = ad.reshape(ad.matmul(enc.Z, query), (batch, rows))
        alpha = ad.softmax(scores, axis=-1, mask=enc.mask)
        context = ad.reshape(ad.matmul(ad.reshape(alpha, (batch, 1, rows)), enc.Z), (batch, -1))
        return alpha, context

    def initial_state(self, enc: EncodedDiff) -> Tuple[Tensor, Tensor]:
        return enc.h0, Tensor(np.zeros(enc.h0.shape))

    def decode_step(self, y_prev, state: Tuple[Tensor, Tensor], enc: EncodedDiff,
                    training: bool = False) -> DecodeStep:
        x = ad.embedding_lookup(self.target_embedding, np.asarray(y_prev, dtype=np.int64).reshape(-1))
        h, c = self.decoder.step(x, *state)
        alpha, context = self.attention_step(h, enc)
        combined = ad.tanh(ad.matmul(ad.concat([context, h], axis=-1), self.W_c))
        combined = ad.dropout(combined, self.config.dropout, training, self.dropout_rng)
        return DecodeStep(ad.matmul(combined, self.W_s), (h, c), alpha)

    def loss(self, examples: Sequence[PreparedExample], training: bool = True) -> Tensor:
        """Teacher-forced cross-entropy averaged over non-PAD target positions (EOS included)."""
        enc = self.encode(self.batch_paths(examples))
        steps = max(len(example.target_ids) for example in examples) + 1
        inputs = np.full((len(examples), steps), PAD_INDEX, dtype=np.int64)
        outputs = np.full((len(examples), steps), PAD_INDEX, dtype=np.int64)
        for b, example in enumerate(examples):
            length = len(example.target_ids)
            inputs[b, 0] = SOS_INDEX
            inputs[b, 1:length + 1] = example.target_ids
            outputs[b, :length] = example.target_ids
            outputs[b, length] = EOS_INDEX
        state = self.initial_state(enc)
        logits = []
        for t in range(steps):
            step = self.decode_step(inputs[:, t], state, enc, training=training)
            state = step.state
            logits.append(step.logits)
        return ad.cross_entropy_with_logits(ad.stack(logits, axis=1), outputs, mask=outputs != PAD_INDEX)

    def greedy_decode(self, enc: EncodedDiff, max_len: Optional[int] = None) -> List[int]:
        max_len = max_len or self.config.max_len
        tokens: List[int] = []
        with ad.no_grad():
            state = self.initial_state(enc)
            previous = SOS_INDEX
            for _ in range(max_len):
                step = self.decode_step([previous], state, enc)
                state = step.state
                previous = int(np.argmax(step.logits.data[0]))
                if previous == EOS_INDEX:
                    break
                tokens.append(previous)
        return tokens

    def beam_search(self, enc: EncodedDiff, beam_width: Optional[int] = None,
                    max_len: Optional[int] = None) -> List[int]:
        """Highest total log-probability hypothesis, EOS excluded.

        Ties go to the earlier completed hypothesis, then to the smaller token-index sequence.
        """
        beam_width = beam_width or self.config.beam_width
        max_len = max_len or self.config.max_len
        live = [Hypothesis((), 0.0, None)]
        finished: List[Tuple[float, int, Tuple[int, ...]]] = []
        with ad.no_grad():
            h, c = self.initial_state(enc)
            for step_index in range(1, max_len + 1):
                count = len(live)
                expanded = enc.repeat(count) if count > 1 else enc
                if step_index == 1:
                    state = (h, c)
                else:
                    state = (Tensor(np.stack([hyp.state[0] for hyp in live])),
                             Tensor(np.stack([hyp.state[1] for hyp in live])))
                previous = [hyp.tokens[-1] if hyp.tokens else SOS_INDEX for hyp in live]
                step = self.decode_step(previous, state, expanded)
                log_probs = ad.log_softmax(step.logits).data.astype(np.float64)

                candidates = []
                for row, hyp in enumerate(live):
                    best = np.argsort(-log_probs[row], kind='stable')[:beam_width]
                    for token in best:
                        candidates.append((hyp.score + float(log_probs[row, token]), hyp.tokens + (int(token),), row))
                candidates.sort(key=lambda item: (-item[0], item[1]))

                live = []
                for score, tokens, row in candidates[:beam_width]:
                    if tokens[-1] == EOS_INDEX:
                        finished.append((score, step_index, tokens[:-1]))
                    elif step_index == max_len:
                        finished.append((score, step_index, tokens))
                    else:
                        live.append(Hypothesis(tokens, score, (step.state[0].data[row], step.state[1].data[row])))
                if not live:
                    break
                best_finished = max((item[0] for item in finished), default=-np.inf)
                if best_finished >= max(hyp.score for hyp in live):
                    break
        finished.sort(key=lambda item: (-item[0], item[1], item[2]))
        return list(finished[0][2]) if finished else []

    def generate(self, contexts: PathContextSet, beam_width: Optional[int] = None,
                 max_len: Optional[int] = None) -> List[str]:
        with ad.no_grad():
            enc = self.encode_diff(contexts)
        return self.target_vocab.decode(self.beam_search(enc, beam_width, max_len), strip=True)


@dataclass
class Hypothesis:
    tokens: Tuple[int, ...]
    score: float
    state: Optional[Tuple[np.ndarray, np.ndarray]]


def dataset_loss(model: Ast2Seq, examples: Sequence[PreparedExample], batch_size: int) -> float:
    """Token-weighted mean loss in evaluation mode."""
    losses, weights = [], []
    with ad.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = examples[start:start + batch_size]
            losses.append(model.loss(batch, training=False).item())
            weights.append(sum(len(example.target_ids) + 1 for example in batch))
    return mean_loss(losses, weights)


def train(model: Ast2Seq, train_examples: Sequence[Example], valid_examples: Sequence[Example],
          seed: int = 13, checkpoint_path=None, progress: bool = False) -> TrainingReport:
    """Teacher-forced Adam training with early stopping on the validation loss.

    Without validation examples the training loss is monitored instead.
    """
    if not train_examples:
        raise EmptyTrainingSet('The generator needs at least one training example')
    config = model.config
    prepared_train = [model.prepare(example) for example in train_examples]
    prepared_valid = [model.prepare(example) for example in valid_examples] or prepared_train

    def train_step(indices: np.ndarray) -> float:
        loss = model.loss([prepared_train[i] for i in indices], training=True)
        loss.backward()
        return loss.item()

    report = fit(
        model.store, train_step, lambda: dataset_loss(model, prepared_valid, config.batch_size),
        count=len(prepared_train), epochs=config.epochs, batch_size=config.batch_size,
        patience=config.patience, lr=config.lr, rng=rng_stream(seed, 'ast2seq:batches'),
        checkpoint_path=checkpoint_path, desc='train_gen', progress=progress,
    )
    logger.info("Generator trained for %d epochs (best %d, loss %.4f)",
                report.epochs_run, report.best_epoch, report.best_valid_loss)
    return report
