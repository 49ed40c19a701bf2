"""Lexer and recursive-descent parser for the supported Java subset.

The grammar covers class and method declarations, the common statements and
expressions. Anything outside it inside a method body becomes an
``UnknownStmt`` whose identifier and literal tokens hang below it as leaves,
so parsing a real-world method never fails on a subset gap.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Tuple

from .exceptions import LexError, UnbalancedBraces

logger = logging.getLogger(__name__)

GRAMMAR_VERSION = 1


class NodeType(Enum):
    """Closed enumeration of non-leaf node types; values are stable ids."""
    CompilationUnit = 0
    ClassDecl = 1
    MethodDeclaration = 2
    Parameter = 3
    FieldDeclaration = 4
    BlockStmt = 5
    ExpressionStmt = 6
    IfStmt = 7
    ForStmt = 8
    ForEachStmt = 9
    WhileStmt = 10
    DoStmt = 11
    ReturnStmt = 12
    TryStmt = 13
    CatchClause = 14
    ThrowStmt = 15
    BreakStmt = 16
    ContinueStmt = 17
    UnknownStmt = 18
    VariableDeclarationExpr = 19
    VariableDeclarator = 20
    AssignExpr = 21
    BinaryExpr = 22
    UnaryExpr = 23
    ConditionalExpr = 24
    InstanceOfExpr = 25
    MethodCallExpr = 26
    ObjectCreationExpr = 27
    ArrayCreationExpr = 28
    FieldAccess = 29
    ArrayAccessExpr = 30
    CastExpr = 31
    EnclosedExpr = 32
    NameExpr = 33
    LiteralExpr = 34
    ThisExpr = 35
    ArgumentList = 36
    ClassOrInterfaceType = 37
    PrimitiveType = 38
    VoidType = 39

    @property
    def id(self) -> int:
        return self.value


# Lexer

KEYWORDS = frozenset("""
abstract assert boolean break byte case catch char class const continue default do double
else enum extends final finally float for goto if implements import instanceof int interface
long native new package private protected public return short static strictfp super switch
synchronized this throw throws transient try var void volatile while
""".split())

LITERAL_WORDS = frozenset(('true', 'false', 'null'))
PRIMITIVES = frozenset(('boolean', 'byte', 'char', 'short', 'int', 'long', 'float', 'double'))
MODIFIERS = frozenset((
    'public', 'private', 'protected', 'static', 'final', 'abstract', 'synchronized',
    'native', 'transient', 'volatile', 'strictfp', 'default',
))

TOKEN_KINDS = ('identifier', 'literal', 'keyword', 'operator', 'punct')

_TOKEN_PATTERN = re.compile(r"""
    (?P<ws>[ \t\f\r\n]+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?(?:\*/|\Z))
  | (?P<string>"(?:\\.|[^"\\\n])*")
  | (?P<char>'(?:\\.|[^'\\\n])+')
  | (?P<number>0[xX][0-9a-fA-F_]+[lL]?
      |0[bB][01_]+[lL]?
      |(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[fFdDlL]?)
  | (?P<word>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<operator>>>>=|<<=|>>=|>>>|->|::|\+\+|--|&&|\|\||==|!=|<=|>=|\+=|-=|\*=|/=|%=|&=|\|=|\^=|<<|>>
      |[=<>!~?:+\-*/&|^%])
  | (?P<punct>[(){}\[\];,.@])
""", re.VERBOSE | re.DOTALL)


@dataclass(frozen=True)
class Token:
    text: str
    kind: str
    line: int = 1
    column: int = 1


def _classify(match: re.Match) -> Optional[Tuple[str, str]]:
    group = match.lastgroup
    text = match.group()
    if group in ('ws', 'line_comment', 'block_comment'):
        return None
    if group == 'string':
        return text[1:-1], 'literal'
    if group == 'char':
        return text[1:-1], 'literal'
    if group == 'number':
        return text, 'literal'
    if group == 'word':
        if text in LITERAL_WORDS:
            return text, 'literal'
        return text, ('keyword' if text in KEYWORDS else 'identifier')
    return text, group


def lex(source: str, strict: bool = True, start_line: int = 1) -> Tuple[List[Token], int]:
    """Tokenize ``source``; returns the tokens and the number of unlexable characters.

    In strict mode an illegal character raises LexError. Otherwise it becomes a
    single-character literal token.
    """
    tokens: List[Token] = []
    unlexable = 0
    line, line_start, pos = start_line, 0, 0
    while pos < len(source):
        match = _TOKEN_PATTERN.match(source, pos)
        if match is None or match.end() == pos:
            char = source[pos]
            column = pos - line_start + 1
            if strict:
                raise LexError(line, column, char)
            unlexable += 1
            tokens.append(Token(char, 'literal', line, column))
            pos += 1
            continue
        classified = _classify(match)
        if classified is not None:
            text, kind = classified
            tokens.append(Token(text, kind, line, pos - line_start + 1))
        newlines = match.group().count('\n')
        if newlines:
            line += newlines
            line_start = match.start() + match.group().rfind('\n') + 1
        pos = match.end()
    return tokens, unlexable


def lex_changed_line(text: str) -> Tuple[List[Token], int]:
    """Lenient lexing of one changed diff line, skipping comment-only lines."""
    stripped = text.strip()
    if stripped.startswith(('*', '/*', '//')):
        return [], 0
    return lex(text, strict=False)


# Tree

@dataclass
class Span:
    start_line: int
    end_line: int

    def contains(self, line: int) -> bool:
        return self.start_line <= line <= self.end_line


@dataclass(eq=False)
class AstNode:
    node_type: Optional[NodeType] = None
    leaf_value: Optional[str] = None
    children: List['AstNode'] = field(default_factory=list)
    span: Span = field(default_factory=lambda: Span(1, 1))

    @property
    def is_leaf(self) -> bool:
        return self.leaf_value is not None

    def iter_nodes(self) -> Iterator['AstNode']:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> List['AstNode']:
        return [node for node in self.iter_nodes() if node.is_leaf]

    def find_all(self, node_type: NodeType) -> List['AstNode']:
        return [node for node in self.iter_nodes() if node.node_type is node_type]

    def __repr__(self) -> str:
        if self.is_leaf:
            return f"Leaf({self.leaf_value!r}@{self.span.start_line})"
        return f"{self.node_type.name}[{len(self.children)}]"


def leaf(token: Token) -> AstNode:
    return AstNode(leaf_value=token.text, span=Span(token.line, token.line))


# Parser

class _Backtrack(Exception):
    """Construct outside the subset; the caller degrades to UnknownStmt."""


_ASSIGN_OPS = frozenset(('=', '+=', '-=', '*=', '/=', '%=', '&=', '|=', '^=', '<<=', '>>=', '>>>='))
_BINARY_PRECEDENCE = [
    ('||',), ('&&',), ('|',), ('^',), ('&',), ('==', '!='),
    ('<', '>', '<=', '>=', 'instanceof'), ('<<', '>>', '>>>'), ('+', '-'), ('*', '/', '%'),
]
_PREFIX_OPS = frozenset(('+', '-', '!', '~', '++', '--'))


class Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0
        self.unknown_statements = 0

    # token helpers

    def peek(self, offset: int = 0) -> Optional[Token]:
        index = self.pos + offset
        return self.tokens[index] if index < len(self.tokens) else None

    def at(self, text: str, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token is not None and token.text == text and token.kind != 'literal'

    def at_kind(self, kind: str, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token is not None and token.kind == kind

    def advance(self) -> Token:
        token = self.peek()
        if token is None:
            raise _Backtrack('unexpected end of input')
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise _Backtrack(f"expected {text!r}")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect_semicolon(self) -> None:
        if self.accept(';'):
            return
        previous = self.tokens[self.pos - 1] if self.pos else None
        current = self.peek()
        # tolerate a missing ';' at a line break
        if current is None or (previous is not None and current.line > previous.line):
            return
        raise _Backtrack("expected ';'")

    def last_line(self) -> int:
        return self.tokens[self.pos - 1].line if self.pos else 1

    def node(self, node_type: NodeType, children: List[AstNode], start_line: int) -> AstNode:
        end_line = max([self.last_line(), start_line] + [c.span.end_line for c in children])
        return AstNode(node_type=node_type, children=children, span=Span(start_line, end_line))

    def skip_balanced(self, open_text: str, close_text: str) -> None:
        depth = 0
        while self.peek() is not None:
            token = self.advance()
            if token.kind == 'literal':
                continue
            if token.text == open_text:
                depth += 1
            elif token.text == close_text:
                depth -= 1
                if depth == 0:
                    return
        raise _Backtrack(f"unbalanced {open_text}{close_text}")

    def skip_generic_arguments(self) -> None:
        if not self.at('<'):
            return
        depth = 0
        while self.peek() is not None:
            token = self.advance()
            if token.text == '<':
                depth += 1
            elif token.text in ('>', '>>', '>>>'):
                depth -= len(token.text)
                if depth <= 0:
                    return
            elif token.text in (';', '{', '}', '(', ')'):
                raise _Backtrack('not a generic argument list')
        raise _Backtrack('unterminated generic argument list')

    def skip_annotations_and_modifiers(self) -> None:
        while True:
            if self.at('@') and not self.at('interface', 1):
                self.advance()
                self.qualified_name_tokens()
                if self.at('('):
                    self.skip_balanced('(', ')')
            elif self.peek() is not None and self.peek().text in MODIFIERS and self.peek().kind == 'keyword':
                self.advance()
            else:
                return

    def qualified_name_tokens(self) -> List[Token]:
        if not self.at_kind('identifier'):
            raise _Backtrack('expected identifier')
        names = [self.advance()]
        while self.at('.') and self.at_kind('identifier', 1):
            self.advance()
            names.append(self.advance())
        return names

    # declarations

    def compilation_unit(self) -> AstNode:
        children = []
        while self.peek() is not None:
            if self.at('package') or self.at('import'):
                while self.peek() is not None and not self.accept(';'):
                    self.advance()
                continue
            if self.accept(';'):
                continue
            start = self.pos
            try:
                member = self.member()
            except _Backtrack:
                self.pos = start
                self.recover_declaration()
                continue
            if member is not None:
                children.append(member)
        start_line = children[0].span.start_line if children else 1
        return self.node(NodeType.CompilationUnit, children, start_line)

    def recover_declaration(self) -> None:
        depth = 0
        while self.peek() is not None:
            token = self.advance()
            if token.text == '{':
                depth += 1
            elif token.text == '}':
                depth -= 1
                if depth <= 0:
                    return
            elif token.text == ';' and depth == 0:
                return

    def class_declaration(self) -> AstNode:
        start_line = self.peek().line
        keyword = self.advance().text
        name = self.advance()
        children = [leaf(name)] if name.kind == 'identifier' else []
        while self.peek() is not None and not self.at('{'):
            self.advance()
        if keyword == 'enum':
            self.skip_balanced('{', '}')
            return self.node(NodeType.ClassDecl, children, start_line)
        self.expect('{')
        while not self.at('}'):
            if self.peek() is None:
                raise _Backtrack('unterminated class body')
            if self.accept(';'):
                continue
            start = self.pos
            try:
                member = self.member()
            except _Backtrack:
                self.pos = start
                self.recover_declaration()
                continue
            if member is not None:
                children.append(member)
        self.expect('}')
        return self.node(NodeType.ClassDecl, children, start_line)

    def member(self) -> Optional[AstNode]:
        self.skip_annotations_and_modifiers()
        token = self.peek()
        if token is None:
            return None
        if token.text in ('class', 'interface', 'enum') and token.kind == 'keyword':
            return self.class_declaration()
        if token.text == '@' and self.at('interface', 1):
            self.advance()
            return self.class_declaration()
        if token.text == '{':
            return self.block()
        start_line = token.line
        self.skip_generic_arguments()
        # constructor
        if self.at_kind('identifier') and self.at('(', 1):
            name = self.advance()
            return self.method_rest(start_line, [leaf(name)])
        type_node = self.type_()
        if not self.at_kind('identifier'):
            raise _Backtrack('expected member name')
        if self.at('(', 1):
            name = self.advance()
            return self.method_rest(start_line, [type_node, leaf(name)])
        declarators = self.declarators()
        self.expect_semicolon()
        return self.node(NodeType.FieldDeclaration, [type_node] + declarators, start_line)

    def method_rest(self, start_line: int, children: List[AstNode]) -> AstNode:
        self.expect('(')
        while not self.at(')'):
            children.append(self.parameter())
            if not self.accept(','):
                break
        self.expect(')')
        while self.accept('['):
            self.expect(']')
        if self.accept('throws'):
            self.qualified_name_tokens()
            while self.accept(','):
                self.qualified_name_tokens()
        if self.at('default'):
            while self.peek() is not None and not self.accept(';'):
                self.advance()
        elif self.at('{'):
            children.append(self.block())
        else:
            self.expect_semicolon()
        return self.node(NodeType.MethodDeclaration, children, start_line)

    def parameter(self) -> AstNode:
        self.skip_annotations_and_modifiers()
        start_line = self.peek().line if self.peek() else self.last_line()
        type_node = self.type_()
        # varargs "..." lexes as three dots
        while self.at('.'):
            self.advance()
        name = self.advance()
        if name.kind != 'identifier':
            raise _Backtrack('expected parameter name')
        while self.accept('['):
            self.expect(']')
        return self.node(NodeType.Parameter, [type_node, leaf(name)], start_line)

    def type_(self) -> AstNode:
        token = self.peek()
        if token is None:
            raise _Backtrack('expected type')
        start_line = token.line
        if token.kind == 'keyword' and token.text in PRIMITIVES:
            self.advance()
            node = self.node(NodeType.PrimitiveType, [leaf(token)], start_line)
        elif token.kind == 'keyword' and token.text == 'void':
            self.advance()
            node = self.node(NodeType.VoidType, [leaf(token)], start_line)
        elif token.kind == 'identifier':
            names = [self.advance()]
            self.skip_generic_arguments()
            while self.at('.') and self.at_kind('identifier', 1):
                self.advance()
                names.append(self.advance())
                self.skip_generic_arguments()
            node = self.node(NodeType.ClassOrInterfaceType, [leaf(n) for n in names], start_line)
        else:
            raise _Backtrack('expected type')
        while self.at('[') and self.at(']', 1):
            self.advance()
            self.advance()
        return node

    def declarators(self) -> List[AstNode]:
        declarators = [self.declarator()]
        while self.accept(','):
            declarators.append(self.declarator())
        return declarators

    def declarator(self) -> AstNode:
        name = self.advance()
        if name.kind != 'identifier':
            raise _Backtrack('expected variable name')
        while self.accept('['):
            self.expect(']')
        children = [leaf(name)]
        if self.accept('='):
            if self.at('{'):
                children.append(self.array_initializer())
            else:
                children.append(self.expression())
        return self.node(NodeType.VariableDeclarator, children, name.line)

    def array_initializer(self) -> AstNode:
        start_line = self.expect('{').line
        items = []
        while not self.at('}'):
            items.append(self.array_initializer() if self.at('{') else self.expression())
            if not self.accept(','):
                break
        self.expect('}')
        return self.node(NodeType.ArgumentList, items, start_line)

    # statements

    def block(self) -> AstNode:
        start_line = self.expect('{').line
        statements = []
        while not self.at('}'):
            if self.peek() is None:
                raise UnbalancedBraces(f"Block opened at line {start_line} is never closed")
            statement = self.statement()
            if statement is not None:
                statements.append(statement)
        self.expect('}')
        return self.node(NodeType.BlockStmt, statements, start_line)

    def statement(self) -> Optional[AstNode]:
        start = self.pos
        try:
            return self.statement_inner()
        except _Backtrack:
            self.pos = start
            return self.unknown_statement()

    def unknown_statement(self) -> AstNode:
        start_line = self.peek().line
        leaves = []
        depth = 0
        while self.peek() is not None:
            token = self.peek()
            if token.kind != 'literal' and token.text == '}' and depth == 0:
                break
            self.advance()
            if token.kind in ('identifier', 'literal'):
                if token.text:
                    leaves.append(leaf(token))
                continue
            if token.text in ('(', '[', '{'):
                depth += 1
            elif token.text in (')', ']', '}'):
                depth = max(depth - 1, 0)
                if token.text == '}' and depth == 0 and not self.at(')') and not self.at(';'):
                    break
            elif token.text == ';' and depth == 0:
                break
        self.unknown_statements += 1
        return self.node(NodeType.UnknownStmt, leaves, start_line)

    def statement_inner(self) -> Optional[AstNode]:
        token = self.peek()
        start_line = token.line
        text = token.text if token.kind != 'literal' else None
        if text == '{':
            return self.block()
        if text == ';':
            self.advance()
            return None
        if text == 'if':
            self.advance()
            condition = self.parenthesized()
            children = [condition, self.required_statement()]
            if self.accept('else'):
                children.append(self.required_statement())
            return self.node(NodeType.IfStmt, children, start_line)
        if text == 'while':
            self.advance()
            condition = self.parenthesized()
            return self.node(NodeType.WhileStmt, [condition, self.required_statement()], start_line)
        if text == 'do':
            self.advance()
            body = self.required_statement()
            self.expect('while')
            condition = self.parenthesized()
            self.expect_semicolon()
            return self.node(NodeType.DoStmt, [body, condition], start_line)
        if text == 'for':
            return self.for_statement()
        if text == 'return':
            self.advance()
            children = [] if self.at(';') else [self.expression()]
            self.expect_semicolon()
            return self.node(NodeType.ReturnStmt, children, start_line)
        if text == 'throw':
            self.advance()
            children = [self.expression()]
            self.expect_semicolon()
            return self.node(NodeType.ThrowStmt, children, start_line)
        if text in ('break', 'continue'):
            self.advance()
            children = [leaf(self.advance())] if self.at_kind('identifier') else []
            self.expect_semicolon()
            node_type = NodeType.BreakStmt if text == 'break' else NodeType.ContinueStmt
            return self.node(node_type, children, start_line)
        if text == 'try':
            return self.try_statement()
        if text in ('class', 'interface', 'enum') or (text in MODIFIERS and self.at('class', 1)):
            self.skip_annotations_and_modifiers()
            return self.class_declaration()
        if text in ('switch', 'synchronized', 'assert', 'yield'):
            raise _Backtrack(f"{text} statement")
        declaration = self.try_local_declaration()
        if declaration is not None:
            self.expect_semicolon()
            return self.node(NodeType.ExpressionStmt, [declaration], start_line)
        expression = self.expression()
        self.expect_semicolon()
        return self.node(NodeType.ExpressionStmt, [expression], start_line)

    def required_statement(self) -> AstNode:
        statement = self.statement()
        if statement is None:
            return self.node(NodeType.BlockStmt, [], self.last_line())
        return statement

    def parenthesized(self) -> AstNode:
        self.expect('(')
        expression = self.expression()
        self.expect(')')
        return expression

    def try_local_declaration(self) -> Optional[AstNode]:
        start = self.pos
        start_line = self.peek().line
        try:
            while self.at('final') or self.at('@'):
                self.skip_annotations_and_modifiers()
            if self.at('var') and self.at_kind('identifier', 1):
                type_node = self.node(NodeType.ClassOrInterfaceType, [leaf(self.advance())], start_line)
            else:
                type_node = self.type_()
            if not self.at_kind('identifier'):
                raise _Backtrack('not a declaration')
            follower = self.peek(1)
            if follower is None or follower.text not in ('=', ';', ',', '[', ':') or follower.kind == 'literal':
                if not (follower is not None and follower.line > self.peek().line):
                    raise _Backtrack('not a declaration')
        except _Backtrack:
            self.pos = start
            return None
        declarators = self.declarators()
        return self.node(NodeType.VariableDeclarationExpr, [type_node] + declarators, start_line)

    def for_statement(self) -> AstNode:
        start_line = self.expect('for').line
        self.expect('(')
        declaration = self.try_local_declaration()
        if declaration is not None and self.accept(':'):
            iterable = self.expression()
            self.expect(')')
            body = self.required_statement()
            return self.node(NodeType.ForEachStmt, [declaration, iterable, body], start_line)
        children = []
        if declaration is not None:
            children.append(declaration)
        elif not self.at(';'):
            children.extend(self.expression_list())
        self.expect(';')
        if not self.at(';'):
            children.append(self.expression())
        self.expect(';')
        if not self.at(')'):
            children.extend(self.expression_list())
        self.expect(')')
        children.append(self.required_statement())
        return self.node(NodeType.ForStmt, children, start_line)

    def expression_list(self) -> List[AstNode]:
        expressions = [self.expression()]
        while self.accept(','):
            expressions.append(self.expression())
        return expressions

    def try_statement(self) -> AstNode:
        start_line = self.expect('try').line
        children = []
        if self.accept('('):
            while not self.at(')'):
                declaration = self.try_local_declaration()
                children.append(declaration if declaration is not None else self.expression())
                if not self.accept(';'):
                    break
            self.expect(')')
        children.append(self.block())
        while self.at('catch'):
            catch_line = self.advance().line
            self.expect('(')
            self.skip_annotations_and_modifiers()
            param_line = self.peek().line if self.peek() else catch_line
            types = [self.type_()]
            while self.accept('|'):
                types.append(self.type_())
            name = self.advance()
            if name.kind != 'identifier':
                raise _Backtrack('expected exception name')
            self.expect(')')
            parameter = self.node(NodeType.Parameter, types + [leaf(name)], param_line)
            children.append(self.node(NodeType.CatchClause, [parameter, self.block()], catch_line))
        if self.accept('finally'):
            children.append(self.block())
        return self.node(NodeType.TryStmt, children, start_line)

    # expressions

    def expression(self) -> AstNode:
        start_line = self.peek().line if self.peek() else self.last_line()
        target = self.conditional()
        token = self.peek()
        if token is not None and token.kind == 'operator' and token.text in _ASSIGN_OPS:
            self.advance()
            value = self.array_initializer() if self.at('{') else self.expression()
            return self.node(NodeType.AssignExpr, [target, value], start_line)
        if token is not None and token.text in ('->', '::'):
            raise _Backtrack('lambda or method reference')
        return target

    def conditional(self) -> AstNode:
        start_line = self.peek().line if self.peek() else self.last_line()
        condition = self.binary(0)
        if self.at('?'):
            self.advance()
            then = self.expression()
            self.expect(':')
            otherwise = self.conditional()
            return self.node(NodeType.ConditionalExpr, [condition, then, otherwise], start_line)
        return condition

    def binary(self, level: int) -> AstNode:
        if level == len(_BINARY_PRECEDENCE):
            return self.unary()
        start_line = self.peek().line if self.peek() else self.last_line()
        left = self.binary(level + 1)
        operators = _BINARY_PRECEDENCE[level]
        while self.peek() is not None and self.peek().kind in ('operator', 'keyword') \
                and self.peek().text in operators:
            operator = self.advance().text
            if operator == 'instanceof':
                right = self.type_()
                left = self.node(NodeType.InstanceOfExpr, [left, right], start_line)
            else:
                right = self.binary(level + 1)
                left = self.node(NodeType.BinaryExpr, [left, right], start_line)
        return left

    def unary(self) -> AstNode:
        token = self.peek()
        if token is None:
            raise _Backtrack('unexpected end of expression')
        start_line = token.line
        if token.kind == 'operator' and token.text in _PREFIX_OPS:
            self.advance()
            return self.node(NodeType.UnaryExpr, [self.unary()], start_line)
        if token.text == '(' and token.kind == 'punct':
            cast = self.try_cast()
            if cast is not None:
                return cast
        return self.postfix(self.primary())

    def try_cast(self) -> Optional[AstNode]:
        start = self.pos
        start_line = self.peek().line
        try:
            self.expect('(')
            type_node = self.type_()
            self.expect(')')
            following = self.peek()
            primitive = type_node.node_type is NodeType.PrimitiveType
            if following is None:
                raise _Backtrack('not a cast')
            if not primitive and not (
                following.kind in ('identifier', 'literal')
                or following.text in ('(', 'this', 'new', '!', '~', 'super')
            ):
                raise _Backtrack('not a cast')
        except _Backtrack:
            self.pos = start
            return None
        return self.node(NodeType.CastExpr, [type_node, self.unary()], start_line)

    def arguments(self) -> AstNode:
        start_line = self.expect('(').line
        args = []
        while not self.at(')'):
            args.append(self.expression())
            if not self.accept(','):
                break
        self.expect(')')
        return self.node(NodeType.ArgumentList, args, start_line)

    def primary(self) -> AstNode:
        token = self.advance()
        start_line = token.line
        if token.kind == 'literal':
            return self.node(NodeType.LiteralExpr, [leaf(token)] if token.text else [], start_line)
        if token.text == '(' and token.kind == 'punct':
            inner = self.expression()
            self.expect(')')
            return self.node(NodeType.EnclosedExpr, [inner], start_line)
        if token.text in ('this', 'super') and token.kind == 'keyword':
            if self.at('('):
                return self.node(NodeType.MethodCallExpr, [self.arguments()], start_line)
            return self.node(NodeType.ThisExpr, [], start_line)
        if token.text == 'new' and token.kind == 'keyword':
            return self.creation(start_line)
        if token.kind == 'identifier':
            if self.at('('):
                return self.node(NodeType.MethodCallExpr, [leaf(token), self.arguments()], start_line)
            return self.node(NodeType.NameExpr, [leaf(token)], start_line)
        if token.kind == 'keyword' and token.text in PRIMITIVES and self.at('.') and self.at('class', 1):
            self.advance()
            self.advance()
            return self.node(NodeType.PrimitiveType, [leaf(token)], start_line)
        raise _Backtrack(f"unexpected token {token.text!r}")

    def creation(self, start_line: int) -> AstNode:
        type_node = self.type_() if not self.at('<') else None
        if type_node is None:
            raise _Backtrack('generic constructor call')
        if self.at('['):
            dimensions = []
            dim_line = self.peek().line
            while self.accept('['):
                if not self.at(']'):
                    dimensions.append(self.expression())
                self.expect(']')
            children = [type_node, self.node(NodeType.ArgumentList, dimensions, dim_line)]
            if self.at('{'):
                children.append(self.array_initializer())
            return self.node(NodeType.ArrayCreationExpr, children, start_line)
        # type_() already consumed "[]" pairs; an initializer may follow
        if self.at('{'):
            return self.node(NodeType.ArrayCreationExpr, [type_node, self.array_initializer()], start_line)
        children = [type_node, self.arguments()]
        if self.at('{'):
            # anonymous class body
            raise _Backtrack('anonymous class')
        return self.node(NodeType.ObjectCreationExpr, children, start_line)

    def postfix(self, expression: AstNode) -> AstNode:
        start_line = expression.span.start_line
        while True:
            if self.at('.'):
                self.advance()
                if self.at('<'):
                    raise _Backtrack('explicit generic invocation')
                name = self.advance()
                if name.kind == 'keyword' and name.text in ('class', 'this', 'new'):
                    raise _Backtrack('qualified this/new/class literal')
                if name.kind != 'identifier':
                    raise _Backtrack('expected member name')
                if self.at('('):
                    expression = self.node(NodeType.MethodCallExpr, [expression, leaf(name), self.arguments()],
                                           start_line)
                else:
                    expression = self.node(NodeType.FieldAccess, [expression, leaf(name)], start_line)
            elif self.at('[') and not self.at(']', 1):
                self.advance()
                index = self.expression()
                self.expect(']')
                expression = self.node(NodeType.ArrayAccessExpr, [expression, index], start_line)
            elif self.peek() is not None and self.peek().kind == 'operator' and self.peek().text in ('++', '--'):
                self.advance()
                expression = self.node(NodeType.UnaryExpr, [expression], start_line)
            else:
                return expression


def check_braces(tokens: List[Token]) -> None:
    depth = 0
    opened = False
    for token in tokens:
        if token.kind != 'punct':
            continue
        if token.text == '{':
            depth += 1
            opened = True
        elif token.text == '}':
            depth -= 1
            if depth < 0:
                raise UnbalancedBraces(f"Unexpected '}}' at {token.line}:{token.column}")
    if depth != 0:
        raise UnbalancedBraces(f"{depth} unclosed '{{'")
    if not opened:
        raise UnbalancedBraces('No braces: source holds no class or method body')


def parse_source(source: str) -> AstNode:
    """Parse a compilation unit or a bare method into a CompilationUnit tree."""
    tokens, _ = lex(source, strict=True)
    check_braces(tokens)
    parser = Parser(tokens)
    unit = parser.compilation_unit()
    if parser.unknown_statements:
        logger.debug("%d statements degraded to UnknownStmt", parser.unknown_statements)
    return unit
