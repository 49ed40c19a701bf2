from django.test import SimpleTestCase

from commits.exceptions import LexError, UnbalancedBraces
from commits.javalang import NodeType, lex, parse_source

LISTING = """public void printString() {
    String str = "HELLO";
    for (int i = 0; i < 10; i++) {
        System.out.print(str);
    }
}
"""


def shape(node):
    if node.is_leaf:
        return node.leaf_value
    return (node.node_type.name, [shape(child) for child in node.children])


class LexerTests(SimpleTestCase):
    def test_kinds_and_positions(self):
        tokens, unlexable = lex('int i = 0;\nreturn "s";')
        self.assertEqual(unlexable, 0)
        self.assertEqual([(t.text, t.kind) for t in tokens], [
            ('int', 'keyword'), ('i', 'identifier'), ('=', 'operator'), ('0', 'literal'), (';', 'punct'),
            ('return', 'keyword'), ('s', 'literal'), (';', 'punct'),
        ])
        self.assertEqual((tokens[5].line, tokens[5].column), (2, 1))

    def test_comments_are_skipped(self):
        tokens, _ = lex('a /* b\n c */ d // e\nf')
        self.assertEqual([(t.text, t.line) for t in tokens], [('a', 1), ('d', 2), ('f', 3)])

    def test_strict_mode_rejects_illegal_characters(self):
        with self.assertRaises(LexError) as caught:
            lex('int a = 1;\nint #b;')
        self.assertEqual((caught.exception.line, caught.exception.column), (2, 5))

    def test_start_line_offsets_lines(self):
        tokens, _ = lex('a\nb', start_line=40)
        self.assertEqual([t.line for t in tokens], [40, 41])

    def test_node_types_are_a_closed_set_of_forty(self):
        self.assertEqual(len(NodeType), 40)
        self.assertEqual(sorted(node.id for node in NodeType), list(range(40)))


class ParserTests(SimpleTestCase):
    def test_listing_structure(self):
        method = parse_source(LISTING).children[0]
        self.assertIs(method.node_type, NodeType.MethodDeclaration)
        body = method.children[-1]
        self.assertEqual([child.node_type for child in body.children], [NodeType.ExpressionStmt, NodeType.ForStmt])
        leaves = [node.leaf_value for node in method.leaves()]
        for expected in ('str', 'HELLO', 'int', 'i', '0', '10', 'print'):
            self.assertIn(expected, leaves)
        self.assertEqual((method.span.start_line, method.span.end_line), (1, 6))

    def test_empty_method(self):
        method = parse_source('void f(){}').children[0]
        self.assertEqual(shape(method), ('MethodDeclaration', [('VoidType', ['void']), 'f', ('BlockStmt', [])]))

    def test_expression_tree(self):
        method = parse_source('int g(int a) { return a * (b + 1); }').children[0]
        self.assertEqual(shape(method.children[-1]), ('BlockStmt', [
            ('ReturnStmt', [('BinaryExpr', [
                ('NameExpr', ['a']),
                ('EnclosedExpr', [('BinaryExpr', [('NameExpr', ['b']), ('LiteralExpr', ['1'])])]),
            ])]),
        ]))

    def test_unsupported_statement_degrades(self):
        method = parse_source('void h(int x) { switch (x) { case 1: go(); } done(); }').children[0]
        statements = method.children[-1].children
        self.assertIs(statements[0].node_type, NodeType.UnknownStmt)
        self.assertEqual([leaf.leaf_value for leaf in statements[0].children], ['x', '1', 'go'])
        self.assertIs(statements[1].node_type, NodeType.ExpressionStmt)

    def test_class_members_and_generics(self):
        unit = parse_source("""
            class Box {
                private List<String> items;
                public Box(int size) { this.size = size; }
                String first() { return items.get(0); }
            }
        """)
        box = unit.children[0]
        self.assertIs(box.node_type, NodeType.ClassDecl)
        self.assertEqual([child.node_type for child in box.children[1:]],
                         [NodeType.FieldDeclaration, NodeType.MethodDeclaration, NodeType.MethodDeclaration])

    def test_missing_semicolon_at_line_end_is_tolerated(self):
        method = parse_source('void k() {\n  a = 1\n  b = 2;\n}').children[0]
        self.assertEqual(len(method.children[-1].children), 2)

    def test_unbalanced_input(self):
        for source in ('', 'void f() {', 'void f() }'):
            with self.subTest(source=source), self.assertRaises(UnbalancedBraces):
                parse_source(source)

    def test_leaves_are_exactly_the_valued_nodes(self):
        for node in parse_source(LISTING).iter_nodes():
            self.assertEqual(node.is_leaf, node.leaf_value is not None)
            if node.is_leaf:
                self.assertEqual(node.children, [])
            self.assertLessEqual(node.span.start_line, node.span.end_line)
