"""BLEU-1..4, ROUGE-L and Meteor over token lists, reported on a 0-100 scale."""
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .exceptions import EmptyReference, EmptySequence

EPSILON = 1e-9
METEOR_EXHAUSTIVE_LIMIT = 20
METEOR_SEARCH_BUDGET = 100000
METRIC_NAMES = ('bleu1', 'bleu2', 'bleu3', 'bleu4', 'rouge_l', 'meteor')


def make_ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_counts(candidate: Sequence[str], reference: Sequence[str], n: int) -> Tuple[int, int]:
    cand_ngrams = make_ngrams(candidate, n)
    ref_ngrams = make_ngrams(reference, n)
    matched = sum(min(count, ref_ngrams[gram]) for gram, count in cand_ngrams.items())
    return matched, max(len(candidate) - n + 1, 0)


def brevity_penalty(candidate_length: int, reference_length: int) -> float:
    if candidate_length > reference_length:
        return 1.0
    if candidate_length == 0:
        return 0.0
    return math.exp(1.0 - reference_length / candidate_length)


def _combine(matches: Sequence[int], totals: Sequence[int], candidate_length: int, reference_length: int) -> float:
    order = len(matches)
    log_sum = 0.0
    for matched, total in zip(matches, totals):
        precision = matched / total if total else 0.0
        log_sum += math.log(precision if precision > 0 else EPSILON) / order
    return 100.0 * brevity_penalty(candidate_length, reference_length) * math.exp(log_sum)


def bleu(candidate: Sequence[str], reference: Sequence[str], n: int = 4) -> float:
    """Sentence BLEU-n with uniform weights; zero precisions are replaced by EPSILON."""
    if not reference:
        raise EmptyReference('BLEU needs a non-empty reference')
    if n not in (1, 2, 3, 4):
        raise ValueError(f"BLEU order must be 1..4, got {n}")
    if not candidate:
        return 0.0
    counts = [_clipped_counts(candidate, reference, k) for k in range(1, n + 1)]
    return _combine([m for m, _ in counts], [t for _, t in counts], len(candidate), len(reference))


def corpus_bleu(pairs: Sequence[Tuple[Sequence[str], Sequence[str]]], n: int = 4) -> float:
    """Corpus BLEU-n: n-gram counts and lengths pooled over all pairs."""
    matches, totals = [0] * n, [0] * n
    candidate_length = reference_length = 0
    for candidate, reference in pairs:
        if not reference:
            raise EmptyReference('BLEU needs non-empty references')
        for k in range(1, n + 1):
            matched, total = _clipped_counts(candidate, reference, k)
            matches[k - 1] += matched
            totals[k - 1] += total
        candidate_length += len(candidate)
        reference_length += len(reference)
    if candidate_length == 0:
        return 0.0
    return _combine(matches, totals, candidate_length, reference_length)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if token == other else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    if not candidate or not reference:
        raise EmptySequence('ROUGE-L needs non-empty sequences')
    lcs = lcs_length(candidate, reference)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def count_chunks(pairs: Sequence[Tuple[int, int]]) -> int:
    """Runs of alignment pairs contiguous and ordered in both sequences; pairs sorted by candidate index."""
    chunks = 0
    previous = None
    for i, j in pairs:
        if previous is None or i != previous[0] + 1 or j != previous[1] + 1:
            chunks += 1
        previous = (i, j)
    return chunks


def _greedy_alignment(candidate: Sequence[str], reference: Sequence[str]) -> List[Tuple[int, int]]:
    used = set()
    pairs: List[Tuple[int, int]] = []
    for i, token in enumerate(candidate):
        follow = pairs[-1][1] + 1 if pairs and pairs[-1][0] == i - 1 else None
        if follow is not None and follow < len(reference) and follow not in used and reference[follow] == token:
            choice = follow
        else:
            choice = next((j for j, other in enumerate(reference) if other == token and j not in used), None)
        if choice is not None:
            used.add(choice)
            pairs.append((i, choice))
    return pairs


class _AlignmentSearch:
    """Depth-first search for a maximal-match alignment with the fewest chunks."""

    def __init__(self, candidate: Sequence[str], reference: Sequence[str], budget: int):
        self.candidate = candidate
        self.positions: Dict[str, List[int]] = {}
        for j, token in enumerate(reference):
            self.positions.setdefault(token, []).append(j)
        ref_counts = Counter(reference)
        self.max_matches = sum(min(count, ref_counts[token]) for token, count in Counter(candidate).items())
        # upper bound on matches obtainable from candidate[i:]
        self.reachable = [0] * (len(candidate) + 1)
        for i in range(len(candidate) - 1, -1, -1):
            self.reachable[i] = self.reachable[i + 1] + (1 if candidate[i] in self.positions else 0)
        self.budget = budget
        self.visited = 0
        self.best: Optional[List[Tuple[int, int]]] = None
        self.best_chunks = math.inf

    def run(self) -> Optional[List[Tuple[int, int]]]:
        self._visit(0, set(), [], 0)
        return self.best if self.visited <= self.budget else None

    def _visit(self, i: int, used: set, pairs: List[Tuple[int, int]], chunks: int) -> None:
        self.visited += 1
        if self.visited > self.budget or chunks > self.best_chunks:
            return
        if len(pairs) + self.reachable[i] < self.max_matches:
            return
        if i == len(self.candidate):
            if chunks < self.best_chunks:
                self.best, self.best_chunks = list(pairs), chunks
            return
        for j in self.positions.get(self.candidate[i], ()):
            if j in used:
                continue
            extends = bool(pairs) and pairs[-1] == (i - 1, j - 1)
            used.add(j)
            pairs.append((i, j))
            self._visit(i + 1, used, pairs, chunks + (0 if extends else 1))
            pairs.pop()
            used.discard(j)
        self._visit(i + 1, used, pairs, chunks)


def align(candidate: Sequence[str], reference: Sequence[str]) -> List[Tuple[int, int]]:
    """Exact-match unigram alignment: most matches, then fewest chunks."""
    if max(len(candidate), len(reference)) <= METEOR_EXHAUSTIVE_LIMIT:
        found = _AlignmentSearch(candidate, reference, METEOR_SEARCH_BUDGET).run()
        if found is not None:
            return found
    return _greedy_alignment(candidate, reference)


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    if not candidate or not reference:
        raise EmptySequence('Meteor needs non-empty sequences')
    pairs = align(candidate, reference)
    matched = len(pairs)
    if matched == 0:
        return 0.0
    precision = matched / len(candidate)
    recall = matched / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (count_chunks(pairs) / matched) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


@dataclass
class MetricReport:
    bleu1: float = 0.0
    bleu2: float = 0.0
    bleu3: float = 0.0
    bleu4: float = 0.0
    rouge_l: float = 0.0
    meteor: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def __str__(self) -> str:
        return ' '.join(f"{name}={value:.2f}" for name, value in self.to_dict().items())


def _safe(metric, candidate: Sequence[str], reference: Sequence[str]) -> float:
    # an empty candidate scores zero instead of failing the whole report
    return metric(candidate, reference) if candidate else 0.0


def sentence_report(candidate: Sequence[str], reference: Sequence[str]) -> MetricReport:
    if not reference:
        raise EmptyReference('Metrics need a non-empty reference')
    return MetricReport(
        bleu1=bleu(candidate, reference, 1),
        bleu2=bleu(candidate, reference, 2),
        bleu3=bleu(candidate, reference, 3),
        bleu4=bleu(candidate, reference, 4),
        rouge_l=_safe(rouge_l, candidate, reference),
        meteor=_safe(meteor, candidate, reference),
    )


def average(reports: Iterable[MetricReport]) -> MetricReport:
    reports = list(reports)
    if not reports:
        raise EmptySequence('Cannot average an empty list of reports')
    return MetricReport(**{
        name: math.fsum(getattr(report, name) for report in reports) / len(reports) for name in METRIC_NAMES
    })


def corpus_report(pairs: Sequence[Tuple[Sequence[str], Sequence[str]]], mode: str = 'sentence_avg') -> MetricReport:
    """Aggregate (candidate, reference) pairs; ``corpus`` mode pools BLEU counts across pairs."""
    if not pairs:
        raise EmptySequence('corpus_report needs at least one pair')
    report = average(sentence_report(candidate, reference) for candidate, reference in pairs)
    if mode == 'corpus':
        report.bleu1, report.bleu2, report.bleu3, report.bleu4 = (corpus_bleu(pairs, n) for n in range(1, 5))
    elif mode != 'sentence_avg':
        raise ValueError(f"Unknown aggregation mode {mode!r}")
    return report
