import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

POLARITIES = ('added', 'deleted')


@dataclass
class FunctionSource:
    """Complete text of one function touched by a commit"""
    polarity: str
    source: str
    file_path: str
    start_line: Optional[int] = None


@dataclass
class CommitRecord:
    """One benchmark sample as stored in the JSON-lines dataset"""
    commit_id: str
    message: str
    diff: str
    file_changed: int
    project: str
    timestamp: int
    subject: str = ''
    functions: List[FunctionSource] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for function in data['functions']:
            if function['start_line'] is None:
                del function['start_line']
        return data


@dataclass
class TargetMessage:
    """Normalized first sentence of a commit message"""
    tokens: List[str]

    @property
    def text(self) -> str:
        return ' '.join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


@dataclass
class CandidatePair:
    """Retrieved and generated message for one diff, with predicted relevance"""
    diff_tokens: List[str]
    msg_t: List[str]
    msg_g: List[str]
    score_t: float
    score_g: float
    commit_id: str = ''

    @property
    def chosen(self) -> str:
        # ties go to the retrieved message
        return 'generated' if self.score_g > self.score_t else 'retrieved'

    @property
    def message(self) -> List[str]:
        return self.msg_g if self.chosen == 'generated' else self.msg_t

    def to_row(self) -> Dict[str, Any]:
        return {
            'commit_id': self.commit_id,
            'score_t': _finite(self.score_t),
            'score_g': _finite(self.score_g),
            'chosen': self.chosen,
        }


class ContextCache:
    """In-process cache of extracted path contexts, keyed by commit and extraction settings"""

    def __init__(self):
        self.contexts: Dict[Tuple, Any] = {}
        self.hits = 0

    def get(self, commit_id: str, max_paths: int, max_path_nodes: int, seed: int):
        key = (commit_id, max_paths, max_path_nodes, seed)
        if key in self.contexts:
            self.hits += 1
            return self.contexts[key]
        return None

    def set(self, commit_id: str, max_paths: int, max_path_nodes: int, seed: int, contexts) -> None:
        self.contexts[(commit_id, max_paths, max_path_nodes, seed)] = contexts

    def clear(self) -> None:
        self.contexts.clear()
        self.hits = 0


# Global cache instance
context_cache = ContextCache()
