"""Unified git-diff parsing and changed-token extraction."""
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

from .exceptions import BadHunkHeader, MalformedDiff
from .javalang import Token, lex_changed_line

logger = logging.getLogger(__name__)

FILE_DIFF_HEADER = re.compile(r"^diff --git a/(?P<from_file>.*?) b/(?P<to_file>.*?)\s*$")
B_FILE_CHANGE_HEADER = re.compile(r"^\+\+\+ (?:/dev/null|b/(?P<file>.*?))\s*$")
BINARY_DIFF = re.compile(r"^Binary files (?P<from_file>.*) and (?P<to_file>.*) differ$")
CHUNK_HEADER = re.compile(
    r"^@@ -(?P<old_start>\d+)(?:,(?P<old_count>\d+))? \+(?P<new_start>\d+)(?:,(?P<new_count>\d+))? @@(?P<trailing>.*)$"
)
NO_NEWLINE = '\\ No newline at end of file'

SOURCE_SUFFIX = '.java'


@dataclass
class Hunk:
    old_start: int
    old_count: int
    new_start: int
    new_count: int
    deleted_lines: List[str] = field(default_factory=list)
    added_lines: List[str] = field(default_factory=list)
    context_lines: List[str] = field(default_factory=list)
    # line numbers of the changed lines in the pre-/post-change file
    deleted_line_numbers: List[int] = field(default_factory=list)
    added_line_numbers: List[int] = field(default_factory=list)

    @property
    def body_size(self) -> int:
        return len(self.deleted_lines) + len(self.added_lines) + len(self.context_lines)


@dataclass
class DiffChunk:
    file_path: str
    hunks: List[Hunk] = field(default_factory=list)
    binary: bool = False

    @property
    def is_source(self) -> bool:
        # bare hunks carry no path; they are assumed to be source
        return not self.file_path or self.file_path.endswith(SOURCE_SUFFIX)


@dataclass
class TokenGroups:
    added: List[Token] = field(default_factory=list)
    deleted: List[Token] = field(default_factory=list)
    unlexable: int = 0

    def texts(self, polarity: str) -> List[str]:
        return [token.text for token in getattr(self, polarity)]

    def all_texts(self) -> List[str]:
        """Added then deleted token texts, with multiplicity."""
        return self.texts('added') + self.texts('deleted')


@dataclass
class ChangedLines:
    added: Set[int] = field(default_factory=set)
    deleted: Set[int] = field(default_factory=set)


def _normalize(text: str) -> List[str]:
    return text.replace('\r\n', '\n').replace('\r', '\n').split('\n')


def parse_diff(raw: str) -> List[DiffChunk]:
    """Parse diff text into per-file chunks with their hunks.

    Body lines are attributed by the counts in each hunk header, so a deleted
    line that itself starts with ``--`` is never mistaken for a file header.
    """
    lines = _normalize(raw or '')
    if not any(line.startswith('diff --git') or line.startswith('@@') for line in lines):
        raise MalformedDiff('No "diff --git" header or "@@" hunk header found')

    chunks: List[DiffChunk] = []
    chunk: Optional[DiffChunk] = None
    hunk: Optional[Hunk] = None
    old_remaining = new_remaining = 0
    old_line = new_line = 0

    for index, line in enumerate(lines):
        in_body = hunk is not None and (old_remaining > 0 or new_remaining > 0)
        if in_body:
            if line == NO_NEWLINE:
                continue
            marker, text = (line[:1], line[1:]) if line else (' ', '')
            if marker == '-' and old_remaining > 0:
                hunk.deleted_lines.append(text)
                hunk.deleted_line_numbers.append(old_line)
                old_line += 1
                old_remaining -= 1
                continue
            if marker == '+' and new_remaining > 0:
                hunk.added_lines.append(text)
                hunk.added_line_numbers.append(new_line)
                new_line += 1
                new_remaining -= 1
                continue
            if marker == ' ' and old_remaining > 0 and new_remaining > 0:
                hunk.context_lines.append(text)
                old_line += 1
                new_line += 1
                old_remaining -= 1
                new_remaining -= 1
                continue
            # header counts overstate the body; fall through to header handling
            logger.debug("Hunk body ended early at line %d", index)
            old_remaining = new_remaining = 0

        if line == NO_NEWLINE:
            continue
        header = FILE_DIFF_HEADER.match(line)
        if header:
            chunk = DiffChunk(file_path=header.group('to_file'))
            chunks.append(chunk)
            hunk = None
            continue
        if line.startswith('@@'):
            match = CHUNK_HEADER.match(line)
            if not match:
                raise BadHunkHeader(index, line)
            if chunk is None:
                chunk = DiffChunk(file_path='')
                chunks.append(chunk)
            old_count = int(match.group('old_count')) if match.group('old_count') is not None else 1
            new_count = int(match.group('new_count')) if match.group('new_count') is not None else 1
            hunk = Hunk(
                old_start=int(match.group('old_start')),
                old_count=old_count,
                new_start=int(match.group('new_start')),
                new_count=new_count,
            )
            chunk.hunks.append(hunk)
            old_line, new_line = hunk.old_start, hunk.new_start
            old_remaining, new_remaining = old_count, new_count
            continue
        if chunk is not None and BINARY_DIFF.match(line):
            chunk.binary = True
            logger.warning("Skipping binary file section %s", chunk.file_path)
            continue
        b_side = B_FILE_CHANGE_HEADER.match(line)
        if b_side and chunk is not None and not chunk.file_path and b_side.group('file'):
            chunk.file_path = b_side.group('file')
        # index/mode/rename/---/+++ lines carry nothing we keep

    return chunks


def count_chunks(raw: str) -> int:
    """Number of hunks across all files of the diff."""
    return sum(len(chunk.hunks) for chunk in parse_diff(raw))


def tokenize_changes(chunks: List[DiffChunk]) -> TokenGroups:
    """Lex changed lines into added/deleted token groups, dropping punctuation.

    Only Java sections contribute; context lines never do.
    """
    groups = TokenGroups()
    for chunk in chunks:
        if chunk.binary or not chunk.is_source:
            continue
        for hunk in chunk.hunks:
            for polarity, lines in (('deleted', hunk.deleted_lines), ('added', hunk.added_lines)):
                target = getattr(groups, polarity)
                for text in lines:
                    tokens, unlexable = lex_changed_line(text)
                    groups.unlexable += unlexable
                    target.extend(Token(t.text, t.kind) for t in tokens if t.kind != 'punct' and t.text)
    if groups.unlexable:
        logger.warning("%d unlexable characters kept as literal tokens", groups.unlexable)
    return groups


def changed_lines(chunks: List[DiffChunk]) -> Dict[str, ChangedLines]:
    """Changed line numbers per file: added in the new version, deleted in the old."""
    result: Dict[str, ChangedLines] = {}
    for chunk in chunks:
        if chunk.binary:
            continue
        entry = result.setdefault(chunk.file_path, ChangedLines())
        for hunk in chunk.hunks:
            entry.added.update(hunk.added_line_numbers)
            entry.deleted.update(hunk.deleted_line_numbers)
    return result


def changed_texts(chunks: List[DiffChunk]) -> Dict[str, Dict[str, List[str]]]:
    """Changed line texts per file and polarity."""
    result: Dict[str, Dict[str, List[str]]] = {}
    for chunk in chunks:
        if chunk.binary:
            continue
        entry = result.setdefault(chunk.file_path, {'added': [], 'deleted': []})
        for hunk in chunk.hunks:
            entry['added'].extend(hunk.added_lines)
            entry['deleted'].extend(hunk.deleted_lines)
    return result
