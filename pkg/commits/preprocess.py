"""Dataset ingestion, message normalization, filtering, splitting and vocabularies."""
import hashlib
import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from .ast_paths import MAX_PATH_NODES, MAX_PATHS, PathContextSet, record_path_contexts
from .config import SplitSpec, rng_stream
from .diffparse import TokenGroups, count_chunks, parse_diff, tokenize_changes
from .exceptions import (
    CommitsError, DatasetIOError, EmptyAfterNormalization, SchemaError, TooFewProjects,
)
from .javalang import NodeType
from .models import POLARITIES, CommitRecord, FunctionSource, TargetMessage, context_cache

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ('commit_id', 'message', 'diff', 'file_changed', 'project', 'timestamp')

FILE_PLACEHOLDER = '<FILE>'
NUMBER_PLACEHOLDER = '<NUMBER>'
PLACEHOLDERS = (FILE_PLACEHOLDER, NUMBER_PLACEHOLDER)

FILE_EXTENSIONS = (
    'java', 'xml', 'md', 'txt', 'json', 'yml', 'yaml', 'properties', 'gradle', 'py', 'js',
    'html', 'css', 'kt', 'sh', 'cfg', 'conf', 'sql', 'c', 'h', 'cpp',
)
FILE_NAME = re.compile(r"^[\w\-./\\$]*\w\.(?:%s)$" % '|'.join(FILE_EXTENSIONS), re.IGNORECASE)
NUMBER = re.compile(r"^\d+(?:\.\d+)*$")
SUBTOKEN = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")
PUNCTUATION = '\'"`()[]{}<>,;:.!?*#~'
SENTENCE_END = '!?\n'

BOT_KEYWORDS = ('merge', 'rollback', 'revert')
MAX_CHUNKS = 5
MAX_MESSAGE_LENGTH = 20

# Reserved vocabulary indices
PAD, UNK, SOS, EOS = '<PAD>', '<UNK>', '<SOS>', '<EOS>'
RESERVED = (PAD, UNK, SOS, EOS)
PAD_INDEX, UNK_INDEX, SOS_INDEX, EOS_INDEX = range(4)
VOCAB_KINDS = ('subtoken', 'node_type', 'target', 'diff', 'message')


# Message normalization

IRREGULAR = {
    'am': 'be', 'is': 'be', 'are': 'be', 'was': 'be', 'were': 'be', 'been': 'be', 'being': 'be',
    'has': 'have', 'had': 'have', 'having': 'have',
    'did': 'do', 'does': 'do', 'done': 'do', 'goes': 'go', 'went': 'go', 'gone': 'go',
    'made': 'make', 'wrote': 'write', 'written': 'write', 'rewrote': 'rewrite', 'rewritten': 'rewrite',
    'broke': 'break', 'broken': 'break', 'built': 'build', 'rebuilt': 'rebuild', 'found': 'find',
    'got': 'get', 'gotten': 'get', 'ran': 'run', 'kept': 'keep', 'left': 'leave', 'lost': 'lose',
    'sent': 'send', 'spent': 'spend', 'took': 'take', 'taken': 'take', 'threw': 'throw', 'thrown': 'throw',
    'understood': 'understand', 'began': 'begin', 'begun': 'begin', 'brought': 'bring', 'bought': 'buy',
    'caught': 'catch', 'chose': 'choose', 'chosen': 'choose', 'came': 'come', 'drew': 'draw',
    'drawn': 'draw', 'fell': 'fall', 'fallen': 'fall', 'felt': 'feel', 'forgot': 'forget',
    'forgotten': 'forget', 'gave': 'give', 'given': 'give', 'held': 'hold', 'hid': 'hide',
    'hidden': 'hide', 'knew': 'know', 'known': 'know', 'led': 'lead', 'meant': 'mean', 'met': 'meet',
    'paid': 'pay', 'said': 'say', 'saw': 'see', 'seen': 'see', 'sold': 'sell', 'shown': 'show',
    'spoke': 'speak', 'spoken': 'speak', 'stood': 'stand', 'stuck': 'stick', 'told': 'tell',
    'thought': 'think', 'overrode': 'override', 'overridden': 'override', 'children': 'child',
    'men': 'man', 'women': 'woman', 'indices': 'index', 'matrices': 'matrix', 'vertices': 'vertex',
    'analyses': 'analysis', 'dies': 'die', 'lies': 'lie', 'ties': 'tie',
}
KEEP = frozenset((
    'always', 'perhaps', 'various', 'previous', 'across', 'unless', 'besides', 'towards',
    'afterwards', 'thus', 'plus', 'minus', 'bonus', 'status', 'alias', 'bias', 'canvas', 'series',
    'species', 'news', 'this', 'its', 'during', 'nothing', 'something', 'anything', 'everything',
    'morning', 'ceiling', 'embed', 'hundred', 'kindred', 'sacred', 'naked', 'wicked', 'need',
    'speed', 'seed', 'feed', 'proceed', 'succeed', 'exceed', 'indeed', 'breed', 'bleed',
    'data', 'metadata', 'javadoc', 'ios', 'windows', 'analysis', 'basis', 'axis', 'redis',
))
KEEP_ENDINGS = ('ss', 'us', 'is', 'os', 'ias')
# doubled consonants that belong to the base form
KEEP_DOUBLE = frozenset(('add', 'odd', 'egg', 'err', 'inn', 'buzz', 'fizz', 'jazz'))
# stems that lost a silent 'e' which no generic rule restores
E_STEMS = frozenset((
    'cach', 'ignor', 'stor', 'restor', 'scor', 'explor', 'requir', 'acquir', 'compar', 'prepar',
    'declar', 'shar', 'squar', 'renam', 'tim', 'com', 'becom', 'overcom', 'writ', 'rewrit',
))
VOWELS = 'aeiou'


def _is_consonant(word: str, index: int) -> bool:
    char = word[index]
    if char in VOWELS:
        return False
    if char == 'y':
        return index == 0 or not _is_consonant(word, index - 1)
    return True


def _measure(stem: str) -> int:
    pattern = ''.join('c' if _is_consonant(stem, i) else 'v' for i in range(len(stem)))
    return len(re.findall(r"v+c+", pattern))


def _has_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_cvc(stem: str) -> bool:
    n = len(stem)
    if n < 3 or stem[-1] in 'wxy':
        return False
    return _is_consonant(stem, n - 3) and not _is_consonant(stem, n - 2) and _is_consonant(stem, n - 1)


def _restore(stem: str) -> str:
    """Undo consonant doubling or restore the silent 'e' after -ed/-ing removal."""
    if stem in KEEP_DOUBLE or stem in E_STEMS:
        return stem + 'e' if stem in E_STEMS else stem
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in VOWELS + 'lsz':
        return stem[:-1]
    if stem.endswith(('at', 'iz', 'bl', 'dl', 'tl', 'pl', 'gl', 'kl', 'rg', 'dg', 'uir')):
        return stem + 'e'
    if stem.endswith(('c', 'v', 'ur')) or (stem.endswith('s') and not stem.endswith('ss')):
        return stem + 'e'
    if stem.endswith('ang') and not stem.endswith('hang'):
        return stem + 'e'
    if _measure(stem) == 1 and _ends_cvc(stem):
        return stem + 'e'
    return stem


def _lemma_step(word: str) -> str:
    if word in IRREGULAR:
        return IRREGULAR[word]
    if word in KEEP or not word.isalpha():
        return word
    if len(word) > 4 and word.endswith('ies'):
        return word[:-3] + 'y'
    if len(word) > 3 and word.endswith(('sses', 'shes', 'ches', 'xes', 'zes')):
        stem = word[:-2]
        return stem + 'e' if stem in E_STEMS else stem
    if len(word) > 3 and word.endswith('s') and not word.endswith(KEEP_ENDINGS):
        return word[:-1]
    if len(word) > 3 and word.endswith('ed') and not word.endswith('eed'):
        stem = word[:-2]
        if _has_vowel(stem):
            return _restore(stem)
        return word
    if len(word) > 4 and word.endswith('ing'):
        stem = word[:-3]
        if _has_vowel(stem) and len(stem) >= 2:
            return _restore(stem)
    return word


def lemmatize(word: str) -> str:
    """Base form of a lowercase word from the built-in rule table; idempotent."""
    for _ in range(4):
        lemma = _lemma_step(word)
        if lemma == word:
            break
        word = lemma
    return word


def first_sentence(message: str) -> str:
    """Text up to the first '!', '?', newline, or '.' that ends a word."""
    text = message.strip()
    for index, char in enumerate(text):
        if char in SENTENCE_END:
            return text[:index]
        if char == '.' and (index + 1 == len(text) or text[index + 1].isspace()):
            return text[:index]
    return text


def _normalize_piece(piece: str) -> Optional[str]:
    if piece in PLACEHOLDERS:
        return piece
    piece = piece.strip(PUNCTUATION + '-/\\')
    piece = piece.replace('!', '').replace('?', '')
    if not piece:
        return None
    if NUMBER.match(piece):
        return NUMBER_PLACEHOLDER
    return lemmatize(piece.lower())


def normalize_message(message: str) -> TargetMessage:
    """First sentence, placeholders for file names and numbers, lowercase lemmas."""
    tokens: List[str] = []
    for raw in first_sentence(message or '').split():
        if raw in PLACEHOLDERS:
            tokens.append(raw)
            continue
        word = raw.strip(PUNCTUATION)
        if FILE_NAME.match(word):
            tokens.append(FILE_PLACEHOLDER)
            continue
        for piece in word.split('_'):
            token = _normalize_piece(piece)
            if token:
                tokens.append(token)
    if not tokens:
        raise EmptyAfterNormalization(f"Message {message[:40]!r} has no tokens after normalization")
    return TargetMessage(tokens)


def split_subtokens(leaf: str) -> List[str]:
    """Split an identifier at camelCase, underscore and digit boundaries."""
    pieces: List[str] = []
    for part in leaf.split('_'):
        pieces.extend(match.lower() for match in SUBTOKEN.findall(part))
    return pieces


# Ingestion

def _function_sources(line_number: int, values: Any) -> List[FunctionSource]:
    if values is None:
        return []
    if not isinstance(values, list):
        raise SchemaError(line_number, 'functions', 'expected a list')
    functions = []
    for value in values:
        if not isinstance(value, dict):
            raise SchemaError(line_number, 'functions', 'expected objects')
        for key in ('polarity', 'source', 'file_path'):
            if key not in value:
                raise SchemaError(line_number, f"functions.{key}")
        if value['polarity'] not in POLARITIES:
            raise SchemaError(line_number, 'functions.polarity', f"got {value['polarity']!r}")
        start_line = value.get('start_line')
        functions.append(FunctionSource(
            polarity=value['polarity'],
            source=str(value['source']),
            file_path=str(value['file_path']),
            start_line=int(start_line) if start_line is not None else None,
        ))
    return functions


def _integer(line_number: int, data: Dict[str, Any], key: str) -> int:
    try:
        return int(data[key])
    except (TypeError, ValueError) as exc:
        raise SchemaError(line_number, key, str(exc)) from exc


def parse_record(line_number: int, data: Any) -> CommitRecord:
    if not isinstance(data, dict):
        raise SchemaError(line_number, None, 'record is not a JSON object')
    for key in REQUIRED_FIELDS:
        if key not in data or data[key] is None:
            raise SchemaError(line_number, key)
    file_changed = _integer(line_number, data, 'file_changed')
    timestamp = _integer(line_number, data, 'timestamp')
    if file_changed < 1:
        raise SchemaError(line_number, 'file_changed', 'must be >= 1')
    return CommitRecord(
        commit_id=str(data['commit_id']),
        message=str(data['message']),
        diff=str(data['diff']),
        file_changed=file_changed,
        project=str(data['project']),
        timestamp=timestamp,
        subject=str(data.get('subject') or ''),
        functions=_function_sources(line_number, data.get('functions')),
    )


def ingest(dataset_file) -> List[CommitRecord]:
    """Read a JSON-lines dataset; line numbers in errors are 1-based."""
    path = Path(dataset_file)
    records: List[CommitRecord] = []
    seen = set()
    try:
        with path.open(encoding='utf-8') as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(line_number, None, f"unparseable JSON: {exc.msg}") from exc
                record = parse_record(line_number, data)
                if record.commit_id in seen:
                    raise SchemaError(line_number, 'commit_id', f"duplicate id {record.commit_id}")
                seen.add(record.commit_id)
                records.append(record)
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetIOError(f"Cannot read dataset {path}: {exc}") from exc
    logger.info("Ingested %d records from %s", len(records), path)
    return records


def dump_records(records: Iterable[CommitRecord], path) -> None:
    with Path(path).open('w', encoding='utf-8') as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + '\n')


# Filtering

@dataclass
class FilterReport:
    total: int = 0
    kept: int = 0
    dropped: Dict[str, int] = field(default_factory=lambda: {
        'empty': 0, 'non_ascii': 0, 'bot': 0, 'malformed': 0, 'chunks': 0,
        'length': 0, 'empty_context': 0, 'duplicate': 0,
    })

    def drop(self, rule: str) -> None:
        self.dropped[rule] += 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class CommitFilter:
    """Applies the dataset cleaning rules and counts drops per rule."""

    def __init__(self, seed: int = 13, max_chunks: int = MAX_CHUNKS, max_length: int = MAX_MESSAGE_LENGTH,
                 max_paths: int = MAX_PATHS, max_path_nodes: int = MAX_PATH_NODES):
        self.seed = seed
        self.max_chunks = max_chunks
        self.max_length = max_length
        self.max_paths = max_paths
        self.max_path_nodes = max_path_nodes
        self.report = FilterReport()

    def rule_for(self, record: CommitRecord) -> Optional[str]:
        """Name of the first rule that drops ``record``, or None."""
        try:
            target = normalize_message(record.message)
        except EmptyAfterNormalization:
            return 'empty'
        if not target.text.isascii():
            return 'non_ascii'
        if target.tokens[0] in BOT_KEYWORDS:
            return 'bot'
        try:
            chunks = count_chunks(record.diff)
        except CommitsError:
            return 'malformed'
        if chunks > self.max_chunks:
            return 'chunks'
        if len(target) > self.max_length:
            return 'length'
        try:
            contexts_for(record, self.seed, self.max_paths, self.max_path_nodes)
        except CommitsError:
            return 'empty_context'
        return None

    def apply(self, records: Sequence[CommitRecord]) -> List[CommitRecord]:
        self.report = FilterReport(total=len(records))
        survivors = []
        for record in records:
            rule = self.rule_for(record)
            if rule:
                self.report.drop(rule)
                continue
            survivors.append(record)

        earliest: Dict[Tuple[str, str], CommitRecord] = {}
        for record in survivors:
            key = (record.diff, normalize_message(record.message).text)
            best = earliest.get(key)
            if best is None or (record.timestamp, record.commit_id) < (best.timestamp, best.commit_id):
                earliest[key] = record
        kept_ids = {record.commit_id for record in earliest.values()}
        kept = [record for record in survivors if record.commit_id in kept_ids]
        self.report.dropped['duplicate'] = len(survivors) - len(kept)
        self.report.kept = len(kept)
        logger.info("Kept %d of %d commits; drops: %s", len(kept), len(records),
                    ', '.join(f"{rule}={count}" for rule, count in self.report.dropped.items() if count))
        return kept


def filter_commits(records: Sequence[CommitRecord], **options) -> List[CommitRecord]:
    return CommitFilter(**options).apply(records)


# Splitting

@dataclass
class Splits:
    train: List[CommitRecord]
    valid: List[CommitRecord]
    test: List[CommitRecord]

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.valid), len(self.test)

    def to_dict(self) -> Dict[str, List[str]]:
        return {name: [record.commit_id for record in getattr(self, name)] for name in ('train', 'valid', 'test')}

    @classmethod
    def from_ids(cls, ids: Dict[str, List[str]], records: Sequence[CommitRecord]) -> 'Splits':
        by_id = {record.commit_id: record for record in records}
        try:
            return cls(**{name: [by_id[i] for i in ids[name]] for name in ('train', 'valid', 'test')})
        except KeyError as exc:
            raise SchemaError(0, 'commit_id', f"split refers to unknown commit {exc}") from exc


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5 + 1e-9))


def _split_by_commit(records: List[CommitRecord], spec: SplitSpec) -> Splits:
    ordered = sorted(records, key=lambda record: record.commit_id)
    order = rng_stream(spec.seed, 'split:by_commit').permutation(len(ordered))
    shuffled = [ordered[i] for i in order]
    n = len(shuffled)
    n_train = min(n, round_half_up(n * spec.fractions[0]))
    n_valid = min(n - n_train, round_half_up(n * spec.fractions[1]))
    return Splits(shuffled[:n_train], shuffled[n_train:n_train + n_valid], shuffled[n_train + n_valid:])


def _split_by_project(records: List[CommitRecord], spec: SplitSpec) -> Splits:
    projects: Dict[str, List[CommitRecord]] = defaultdict(list)
    for record in records:
        projects[record.project].append(record)
    if len(projects) < 3:
        raise TooFewProjects(f"by_project needs at least 3 projects, got {len(projects)}")

    targets = [fraction * len(records) for fraction in spec.fractions]
    counts = [0, 0, 0]
    assigned: List[List[str]] = [[], [], []]
    ordered = sorted(projects, key=lambda name: (-len(projects[name]), name))
    for position, name in enumerate(ordered):
        remaining = len(ordered) - position
        empty = [i for i in range(3) if not assigned[i]]
        candidates = empty if remaining <= len(empty) else range(3)
        # largest deficit wins; earlier split on ties
        choice = max(candidates, key=lambda i: (targets[i] - counts[i], -i))
        assigned[choice].append(name)
        counts[choice] += len(projects[name])
    parts = [[record for name in sorted(names) for record in projects[name]] for names in assigned]
    return Splits(*parts)


def _split_by_timestamp(records: List[CommitRecord], spec: SplitSpec) -> Splits:
    projects: Dict[str, List[CommitRecord]] = defaultdict(list)
    for record in records:
        projects[record.project].append(record)
    train, valid, test = [], [], []
    for name in sorted(projects):
        history = sorted(projects[name], key=lambda record: (record.timestamp, record.commit_id))
        n_test = min(len(history), round_half_up(len(history) * spec.holdout))
        earliest = history[:len(history) - n_test]
        n_valid = min(len(earliest), round_half_up(len(earliest) * spec.valid_share))
        train.extend(earliest[:len(earliest) - n_valid])
        valid.extend(earliest[len(earliest) - n_valid:])
        test.extend(history[len(history) - n_test:])
    return Splits(train, valid, test)


SPLITTERS = {
    'by_commit': _split_by_commit,
    'by_project': _split_by_project,
    'by_timestamp': _split_by_timestamp,
}


def split(records: Sequence[CommitRecord], spec: SplitSpec) -> Splits:
    """Disjoint train/valid/test partition of ``records`` under ``spec.strategy``."""
    splits = SPLITTERS[spec.strategy](list(records), spec)
    logger.info("Split %s: train=%d valid=%d test=%d", spec.strategy, *splits.sizes())
    return splits


# Vocabularies

class Vocabulary:
    """Token/index bijection with the four reserved markers at 0..3."""

    def __init__(self, kind: str, tokens: Sequence[str] = (), min_freq: int = 1):
        if kind not in VOCAB_KINDS:
            raise ValueError(f"Unknown vocabulary kind {kind!r}")
        self.kind = kind
        self.min_freq = min_freq
        self.itos: List[str] = list(RESERVED)
        self.stoi: Dict[str, int] = {token: index for index, token in enumerate(RESERVED)}
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def from_counts(cls, kind: str, counts: Counter, min_freq: int = 2) -> 'Vocabulary':
        kept = sorted((token for token, count in counts.items() if count >= min_freq and token not in RESERVED),
                      key=lambda token: (-counts[token], token))
        return cls(kind, kept, min_freq=min_freq)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK_INDEX)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index(token) for token in tokens]

    def decode(self, indices: Iterable[int], strip: bool = False) -> List[str]:
        """Tokens for ``indices``; with ``strip`` the markers are removed and EOS ends the output."""
        tokens = []
        for index in indices:
            index = int(index)
            if strip:
                if index == EOS_INDEX:
                    break
                if index in (PAD_INDEX, SOS_INDEX):
                    continue
            tokens.append(self.itos[index] if 0 <= index < len(self.itos) else UNK)
        return tokens

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'min_freq': self.min_freq, 'tokens': self.itos[len(RESERVED):]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Vocabulary':
        return cls(data['kind'], data['tokens'], min_freq=data.get('min_freq', 1))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.itos).encode('utf-8')).hexdigest()


def node_type_vocabulary() -> Vocabulary:
    """Closed vocabulary: index = 4 + NodeType id."""
    return Vocabulary('node_type', [node.name for node in sorted(NodeType, key=lambda node: node.id)])


# Examples

@dataclass
class Example:
    record: CommitRecord
    tokens: TokenGroups
    contexts: PathContextSet
    target: TargetMessage

    @property
    def commit_id(self) -> str:
        return self.record.commit_id

    @property
    def diff_tokens(self) -> List[str]:
        return self.tokens.all_texts()


def contexts_for(record: CommitRecord, seed: int, max_paths: int = MAX_PATHS,
                 max_path_nodes: int = MAX_PATH_NODES) -> PathContextSet:
    cached = context_cache.get(record.commit_id, max_paths, max_path_nodes, seed)
    if cached is not None:
        return cached
    contexts = record_path_contexts(record, seed, max_paths=max_paths, max_path_nodes=max_path_nodes)
    context_cache.set(record.commit_id, max_paths, max_path_nodes, seed, contexts)
    return contexts


def _build_example(args) -> Optional[Example]:
    record, seed, max_paths, max_path_nodes = args
    try:
        return Example(
            record=record,
            tokens=tokenize_changes(parse_diff(record.diff)),
            contexts=contexts_for(record, seed, max_paths, max_path_nodes),
            target=normalize_message(record.message),
        )
    except CommitsError as exc:
        logger.warning("Skipping %s: %s", record.commit_id, exc)
        return None


def prepare_examples(records: Sequence[CommitRecord], seed: int, max_paths: int = MAX_PATHS,
                     max_path_nodes: int = MAX_PATH_NODES, workers: int = 1) -> List[Example]:
    """Token groups, path contexts and targets per record, in input order."""
    jobs = [(record, seed, max_paths, max_path_nodes) for record in records]
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            results = pool.map(_build_example, jobs)
        for example in results:
            if example is not None:
                context_cache.set(example.commit_id, max_paths, max_path_nodes, seed, example.contexts)
    else:
        results = [_build_example(job) for job in jobs]
    return [example for example in results if example is not None]


def build_vocab(train_examples: Sequence[Example], min_freq: int = 2) -> Dict[str, Vocabulary]:
    """Subtoken, node-type and target vocabularies from the training split only."""
    subtokens: Counter = Counter()
    targets: Counter = Counter()
    for example in train_examples:
        for polarity in POLARITIES:
            for path in example.contexts.paths(polarity):
                subtokens.update(split_subtokens(path.start_leaf))
                subtokens.update(split_subtokens(path.end_leaf))
        targets.update(example.target.tokens)
    return {
        'subtoken': Vocabulary.from_counts('subtoken', subtokens, min_freq),
        'node_type': node_type_vocabulary(),
        'target': Vocabulary.from_counts('target', targets, min_freq),
    }


def save_vocabularies(vocabularies: Dict[str, Vocabulary], path) -> None:
    with Path(path).open('w', encoding='utf-8') as handle:
        json.dump({name: vocab.to_dict() for name, vocab in vocabularies.items()}, handle, indent=2)


def load_vocabularies(path) -> Dict[str, Vocabulary]:
    with Path(path).open(encoding='utf-8') as handle:
        data = json.load(handle)
    return {name: Vocabulary.from_dict(values) for name, values in data.items()}
