"""Function location and leaf-to-leaf AST path extraction for changed code."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .config import rng_stream
from .diffparse import ChangedLines, changed_lines, changed_texts, parse_diff
from .exceptions import EmptyContext, LeafNotInTree, LexError, NoEnclosingFunction, UnbalancedBraces
from .javalang import AstNode, NodeType, lex, check_braces, Parser
from .models import POLARITIES, CommitRecord, FunctionSource

logger = logging.getLogger(__name__)

MAX_PATHS = 80
MAX_PATH_NODES = 12


@dataclass
class FunctionAst:
    name: str
    ast: AstNode
    file_path: str
    polarity: str


@dataclass(frozen=True)
class AstPath:
    start_leaf: str
    node_sequence: Tuple[NodeType, ...]
    end_leaf: str

    @property
    def edge_count(self) -> int:
        return len(self.node_sequence) + 1

    def reversed(self) -> 'AstPath':
        return AstPath(self.end_leaf, tuple(reversed(self.node_sequence)), self.start_leaf)

    def __str__(self) -> str:
        nodes = ','.join(node.name for node in self.node_sequence)
        return f"{self.start_leaf},{nodes},{self.end_leaf}"


@dataclass
class PathContextSet:
    added: List[AstPath] = field(default_factory=list)
    deleted: List[AstPath] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.added)

    @property
    def k(self) -> int:
        return len(self.deleted)

    def paths(self, polarity: str) -> List[AstPath]:
        return getattr(self, polarity)


def parse_unit(source: str, start_line: int = 1) -> AstNode:
    tokens, _ = lex(source, strict=True, start_line=start_line)
    check_braces(tokens)
    return Parser(tokens).compilation_unit()


def _method_name(method: AstNode) -> str:
    for child in method.children:
        if child.is_leaf:
            return child.leaf_value
    return ''


def parse_function(source: str, file_path: str = '', polarity: str = 'added', start_line: int = 1) -> FunctionAst:
    """Parse a compilation unit or a single method and return its first method."""
    unit = parse_unit(source, start_line)
    methods = unit.find_all(NodeType.MethodDeclaration)
    if not methods:
        raise NoEnclosingFunction(file_path, start_line)
    method = methods[0]
    return FunctionAst(name=_method_name(method), ast=method, file_path=file_path, polarity=polarity)


def enclosing_method(unit: AstNode, line: int) -> Optional[AstNode]:
    best = None
    for node in unit.find_all(NodeType.MethodDeclaration):
        if not node.span.contains(line):
            continue
        if best is None or (node.span.end_line - node.span.start_line) <= (best.span.end_line - best.span.start_line):
            best = node
    return best


def locate_function(file_source: str, file_path: str, line: int, polarity: str, start_line: int = 1) -> FunctionAst:
    """Innermost method of ``file_source`` whose span contains ``line``."""
    unit = parse_unit(file_source, start_line)
    method = enclosing_method(unit, line)
    if method is None:
        raise NoEnclosingFunction(file_path, line)
    return FunctionAst(name=_method_name(method), ast=method, file_path=file_path, polarity=polarity)


class PathFinder:
    """Parent/depth tables of one tree for repeated shortest-path queries."""

    def __init__(self, root: AstNode):
        self.root = root
        self.parent: Dict[int, Optional[AstNode]] = {id(root): None}
        self.depth: Dict[int, int] = {id(root): 0}
        stack = [root]
        while stack:
            node = stack.pop()
            for child in node.children:
                self.parent[id(child)] = node
                self.depth[id(child)] = self.depth[id(node)] + 1
                stack.append(child)

    def path(self, leaf_a: AstNode, leaf_b: AstNode) -> AstPath:
        for leaf in (leaf_a, leaf_b):
            if id(leaf) not in self.parent or not leaf.is_leaf:
                raise LeafNotInTree(f"{leaf!r} is not a leaf of this tree")
        if leaf_a is leaf_b:
            raise ValueError('shortest_path needs two distinct leaf occurrences')
        up_a: List[AstNode] = []
        up_b: List[AstNode] = []
        a, b = self.parent[id(leaf_a)], self.parent[id(leaf_b)]
        while self.depth[id(a)] > self.depth[id(b)]:
            up_a.append(a)
            a = self.parent[id(a)]
        while self.depth[id(b)] > self.depth[id(a)]:
            up_b.append(b)
            b = self.parent[id(b)]
        while a is not b:
            up_a.append(a)
            up_b.append(b)
            a, b = self.parent[id(a)], self.parent[id(b)]
        nodes = up_a + [a] + list(reversed(up_b))
        return AstPath(leaf_a.leaf_value, tuple(node.node_type for node in nodes), leaf_b.leaf_value)


def shortest_path(ast: AstNode, leaf_a: AstNode, leaf_b: AstNode) -> AstPath:
    return PathFinder(ast).path(leaf_a, leaf_b)


def _changed_leaves(function: FunctionAst, lines: Sequence[int]) -> List[Tuple[int, AstNode]]:
    wanted = set(lines)
    selected = []
    for position, node in enumerate(function.ast.leaves()):
        if any(line in wanted for line in range(node.span.start_line, node.span.end_line + 1)):
            selected.append((position, node))
    return selected


def extract_path_contexts(functions: List[FunctionAst], changed: Dict[str, ChangedLines], seed: int,
                          max_paths: int = MAX_PATHS, max_path_nodes: int = MAX_PATH_NODES) -> PathContextSet:
    """Paths between every pair of changed leaves inside the same function, per polarity.

    Paths longer than ``max_path_nodes`` interior nodes are dropped; when more
    than ``max_paths`` remain, a seeded uniform sample is kept in canonical order.
    """
    contexts = PathContextSet()
    for polarity in POLARITIES:
        candidates = []
        for index, function in enumerate(functions):
            if function.polarity != polarity:
                continue
            lines = getattr(changed.get(function.file_path, ChangedLines()), polarity)
            leaves = _changed_leaves(function, sorted(lines))
            if len(leaves) < 2:
                continue
            finder = PathFinder(function.ast)
            for i in range(len(leaves)):
                for j in range(i + 1, len(leaves)):
                    path = finder.path(leaves[i][1], leaves[j][1])
                    if len(path.node_sequence) <= max_path_nodes:
                        candidates.append(((function.file_path, index, leaves[i][0], leaves[j][0]), path))
        candidates.sort(key=lambda item: item[0])
        paths = [path for _, path in candidates]
        if len(paths) > max_paths:
            rng = rng_stream(seed, f"paths:{polarity}")
            keep = sorted(rng.choice(len(paths), size=max_paths, replace=False).tolist())
            paths = [paths[i] for i in keep]
        setattr(contexts, polarity, paths)
    if contexts.p + contexts.k == 0:
        raise EmptyContext('No AST path could be extracted from the changed code')
    return contexts


def _infer_start_line(function: FunctionSource, texts: Dict[str, Dict[str, List[str]]],
                      changed: Dict[str, ChangedLines]) -> Optional[int]:
    """Align an excerpt to file coordinates through its first matching changed line."""
    polarity_texts = texts.get(function.file_path, {}).get(function.polarity, [])
    numbers = sorted(getattr(changed.get(function.file_path, ChangedLines()), function.polarity))
    source_lines = [line.strip() for line in function.source.split('\n')]
    for text, number in zip(polarity_texts, numbers):
        stripped = text.strip()
        if not stripped:
            continue
        if stripped in source_lines:
            return number - source_lines.index(stripped)
    return None


def record_functions(record: CommitRecord) -> Tuple[List[FunctionAst], Dict[str, ChangedLines]]:
    """Methods of a commit that enclose its changed lines, in file coordinates."""
    chunks = parse_diff(record.diff)
    changed = changed_lines(chunks)
    texts = changed_texts(chunks)
    source_files = {chunk.file_path for chunk in chunks if not chunk.binary and chunk.is_source}
    functions: List[FunctionAst] = []
    for source in record.functions:
        if source.file_path not in source_files:
            logger.debug("%s: function in %s lies outside the Java sections", record.commit_id, source.file_path)
            continue
        start_line = source.start_line or _infer_start_line(source, texts, changed)
        if start_line is None:
            logger.debug("%s: function in %s matches no changed line", record.commit_id, source.file_path)
            continue
        try:
            unit = parse_unit(source.source, start_line)
        except (LexError, UnbalancedBraces) as exc:
            logger.warning("%s: skipping unparseable function in %s: %s", record.commit_id, source.file_path, exc)
            continue
        seen = set()
        for line in sorted(getattr(changed.get(source.file_path, ChangedLines()), source.polarity)):
            method = enclosing_method(unit, line)
            if method is None or id(method) in seen:
                continue
            seen.add(id(method))
            functions.append(FunctionAst(_method_name(method), method, source.file_path, source.polarity))
    return functions, changed


def record_path_contexts(record: CommitRecord, seed: int, max_paths: int = MAX_PATHS,
                         max_path_nodes: int = MAX_PATH_NODES) -> PathContextSet:
    functions, changed = record_functions(record)
    return extract_path_contexts(functions, changed, seed, max_paths=max_paths, max_path_nodes=max_path_nodes)
