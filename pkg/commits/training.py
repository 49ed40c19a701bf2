"""Early stopping, batching and the epoch loop shared by both trainers."""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .exceptions import NonFiniteDetected
from .params import ParamStore, adam_step, save_checkpoint

logger = logging.getLogger(__name__)


class EarlyStopping:
    """Stops once the monitored loss has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch; True when ``loss`` is a new best."""
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def iterate_batches(count: int, batch_size: int, rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
    order = rng.permutation(count) if rng is not None else np.arange(count)
    return [order[start:start + batch_size] for start in range(0, count, batch_size)]


@dataclass
class TrainingReport:
    epochs_run: int = 0
    best_epoch: int = 0
    best_valid_loss: float = math.inf
    stopped_early: bool = False
    train_losses: List[float] = field(default_factory=list)
    valid_losses: List[float] = field(default_factory=list)
    checkpoint_sha256: str = ''

    def to_dict(self):
        data = asdict(self)
        if math.isinf(data['best_valid_loss']):
            data['best_valid_loss'] = None
        return data


def fit(store: ParamStore, train_step: Callable[[np.ndarray], float], valid_loss: Callable[[], float],
        count: int, epochs: int, batch_size: int, patience: int, lr: float, rng: np.random.Generator,
        checkpoint_path=None, desc: str = 'train', progress: bool = False) -> TrainingReport:
    """Mini-batch Adam with early stopping; the best-validation parameters are kept.

    ``train_step`` computes and backpropagates the loss of one batch of indices
    and returns its value.
    """
    report = TrainingReport()
    stopper = EarlyStopping(patience)
    best = store.snapshot()
    for epoch in tqdm(range(1, epochs + 1), desc=desc, disable=not progress):
        losses = []
        for indices in iterate_batches(count, batch_size, rng):
            loss = train_step(indices)
            if not math.isfinite(loss):
                raise NonFiniteDetected(f"{desc}: non-finite training loss at epoch {epoch}")
            adam_step(store, lr=lr)
            losses.append(loss)
        monitored = valid_loss()
        report.train_losses.append(float(np.mean(losses)) if losses else 0.0)
        report.valid_losses.append(monitored)
        report.epochs_run = epoch
        if stopper.update(monitored):
            best = store.snapshot()
        logger.info("%s epoch %d: train=%.4f valid=%.4f", desc, epoch, report.train_losses[-1], monitored)
        if stopper.should_stop:
            report.stopped_early = True
            logger.info("%s: no improvement for %d epochs, stopping", desc, patience)
            break
    store.restore(best)
    report.best_epoch = stopper.best_epoch
    report.best_valid_loss = stopper.best
    if checkpoint_path is not None:
        report.checkpoint_sha256 = save_checkpoint(store, checkpoint_path)
    return report


def mean_loss(batch_losses: Sequence[float], weights: Sequence[float]) -> float:
    total = float(np.sum(weights))
    return float(np.dot(batch_losses, weights) / total) if total else 0.0
