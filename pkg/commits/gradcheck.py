"""Central-difference verification of backpropagated gradients."""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .autodiff import Tensor, no_grad
from .params import ParamStore

logger = logging.getLogger(__name__)


@dataclass
class GradCheckEntry:
    name: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def abs_error(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def rel_error(self) -> float:
        return self.abs_error / max(abs(self.analytic), abs(self.numeric), 1e-8)


@dataclass
class GradCheckReport:
    checked: int = 0
    failures: List[GradCheckEntry] = field(default_factory=list)
    max_rel_error: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def grad_check(f: Callable[[], Tensor], store: ParamStore, eps: float = 1e-3, tol_rel: float = 1e-2,
               atol: float = 0.0, max_entries: int = 200,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """Compare backprop gradients of scalar ``f`` with central differences.

    Stores with more than ``max_entries`` scalars are checked on a random
    sample of that many entries. An entry fails when its relative error
    exceeds ``tol_rel`` and its absolute error exceeds ``atol``.
    """
    store.zero_grad()
    f().backward()
    analytic = {name: (tensor.grad.copy() if tensor.grad is not None else np.zeros_like(tensor.data))
                for name, tensor in store}

    entries = [(name, index) for name, tensor in store for index in np.ndindex(*tensor.shape)]
    if len(entries) > max_entries:
        rng = rng if rng is not None else np.random.default_rng(0)
        chosen = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[i] for i in sorted(chosen)]

    report = GradCheckReport()
    with no_grad():
        for name, index in entries:
            tensor = store[name]
            original = tensor.data[index].copy()
            tensor.data[index] = original + eps
            plus = f().item()
            tensor.data[index] = original - eps
            minus = f().item()
            tensor.data[index] = original
            entry = GradCheckEntry(name, tuple(int(i) for i in index), float(analytic[name][index]),
                                   (plus - minus) / (2.0 * eps))
            report.checked += 1
            report.max_rel_error = max(report.max_rel_error, entry.rel_error)
            if entry.rel_error > tol_rel and entry.abs_error > atol:
                report.failures.append(entry)
    store.zero_grad()
    if report.failures:
        logger.warning("Gradient check: %d of %d entries failed", len(report.failures), report.checked)
    return report
