import json
import tempfile
from collections import Counter
from dataclasses import replace
from pathlib import Path

from django.test import SimpleTestCase

from commits.ast_paths import AstPath, PathContextSet
from commits.config import SplitSpec
from commits.diffparse import TokenGroups
from commits.exceptions import EmptyAfterNormalization, SchemaError, TooFewProjects
from commits.javalang import NodeType
from commits.models import TargetMessage
from commits.preprocess import (
    EOS_INDEX, UNK_INDEX, CommitFilter, Example, Vocabulary, build_vocab, filter_commits, first_sentence,
    ingest, lemmatize, load_vocabularies, node_type_vocabulary, normalize_message, prepare_examples,
    save_vocabularies, split, split_subtokens,
)
from commits.tests.fixtures import toy_corpus, toy_record, write_dataset


class IngestTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_well_formed_lines(self):
        path = write_dataset(toy_corpus(3), self.dir / 'data.jsonl')
        records = ingest(path)
        self.assertEqual([r.commit_id for r in records], ['c0000', 'c0001', 'c0002'])
        self.assertEqual(records[0].functions[0].polarity, 'deleted')
        self.assertEqual(records[0].functions[0].start_line, 10)

    def test_missing_field_names_it(self):
        data = toy_record(0).to_dict()
        del data['diff']
        path = self.dir / 'bad.jsonl'
        path.write_text(json.dumps(toy_record(1).to_dict()) + '\n' + json.dumps(data) + '\n')
        with self.assertRaises(SchemaError) as caught:
            ingest(path)
        self.assertEqual((caught.exception.line, caught.exception.field), (2, 'diff'))

    def test_unparseable_line_and_duplicates(self):
        path = self.dir / 'broken.jsonl'
        path.write_text('{"commit_id": \n')
        with self.assertRaises(SchemaError) as caught:
            ingest(path)
        self.assertEqual(caught.exception.line, 1)
        write_dataset([toy_record(0), toy_record(0)], path)
        with self.assertRaises(SchemaError):
            ingest(path)

    def test_record_without_functions_is_ingested(self):
        record = replace(toy_record(0), commit_id='imports', functions=[])
        records = ingest(write_dataset([record], self.dir / 'imports.jsonl'))
        self.assertEqual(records[0].functions, [])
        cleaner = CommitFilter()
        self.assertEqual(cleaner.apply(records), [])
        self.assertEqual(cleaner.report.dropped['empty_context'], 1)


class NormalizeMessageTests(SimpleTestCase):
    def test_first_sentence_with_placeholders(self):
        message = normalize_message('Fixed bugs in FetchPhase.java at line 380. Also refactor.')
        self.assertEqual(message.tokens, ['fix', 'bug', 'in', '<FILE>', 'at', 'line', '<NUMBER>'])

    def test_simple_and_underscored(self):
        self.assertEqual(normalize_message('update').tokens, ['update'])
        self.assertEqual(normalize_message('fix_test_on_ci').tokens, ['fix', 'test', 'on', 'ci'])

    def test_version_numbers_do_not_end_the_sentence(self):
        self.assertEqual(first_sentence('Bump to 1.2.3 now. Later'), 'Bump to 1.2.3 now')
        self.assertEqual(normalize_message('Bump to 1.2.3').tokens, ['bump', 'to', '<NUMBER>'])

    def test_other_boundaries(self):
        self.assertEqual(first_sentence('Works! really'), 'Works')
        self.assertEqual(first_sentence('Header line\nbody'), 'Header line')

    def test_lemmas(self):
        cases = {
            'fixed': 'fix', 'made': 'make', 'bugs': 'bug', 'classes': 'class', 'dependencies': 'dependency',
            'added': 'add', 'running': 'run', 'renamed': 'rename', 'removes': 'remove', 'status': 'status',
            'caching': 'cache', 'stopped': 'stop', 'using': 'use',
        }
        for word, lemma in cases.items():
            with self.subTest(word=word):
                self.assertEqual(lemmatize(word), lemma)

    def test_idempotent(self):
        for message in ('Fixed bugs in FetchPhase.java at line 380.', 'Renamed the caching classes', 'Using 2 workers'):
            tokens = normalize_message(message).tokens
            self.assertEqual(normalize_message(' '.join(tokens)).tokens, tokens)

    def test_empty_after_normalization(self):
        with self.assertRaises(EmptyAfterNormalization):
            normalize_message('... !!!')


class SubtokenTests(SimpleTestCase):
    def test_splits(self):
        self.assertEqual(split_subtokens('onOrAfter'), ['on', 'or', 'after'])
        self.assertEqual(split_subtokens('NPE'), ['npe'])
        self.assertEqual(split_subtokens('parse2Json_v3'), ['parse', '2', 'json', 'v', '3'])
        self.assertEqual(split_subtokens('HTTPServer'), ['http', 'server'])


class FilterTests(SimpleTestCase):
    def test_rules(self):
        six_hunks = toy_record(1)
        hunks = ''.join(f"@@ -{10 * i},1 +{10 * i},1 @@\n-a{i}();\n+b{i}();\n" for i in range(1, 7))
        six_hunks = replace(six_hunks, commit_id='six', diff='diff --git a/A.java b/A.java\n' + hunks)
        long_message = replace(toy_record(2), commit_id='long', message=' '.join(['word'] * 21))
        records = [
            toy_record(0),
            replace(toy_record(3), commit_id='empty', message='   '),
            replace(toy_record(4), commit_id='ascii', message='Fix café handling'),
            replace(toy_record(5), commit_id='merge', message="Merge branch 'master'"),
            replace(toy_record(6), commit_id='broken', diff='not a diff'),
            six_hunks,
            long_message,
        ]
        cleaner = CommitFilter()
        kept = cleaner.apply(records)
        self.assertEqual([record.commit_id for record in kept], ['c0000'])
        dropped = cleaner.report.dropped
        for rule in ('empty', 'non_ascii', 'bot', 'malformed', 'chunks', 'length'):
            self.assertEqual(dropped[rule], 1, rule)
        self.assertEqual((cleaner.report.total, cleaner.report.kept), (7, 1))

    def test_duplicates_keep_the_earliest(self):
        first = replace(toy_record(1), commit_id='late', timestamp=20)
        second = replace(toy_record(1), commit_id='early', timestamp=10)
        kept = filter_commits([first, second])
        self.assertEqual([(record.commit_id, record.timestamp) for record in kept], [('early', 10)])

    def test_never_grows_and_is_idempotent(self):
        records = toy_corpus(12) + [replace(toy_record(1), commit_id='copy', timestamp=0)]
        once = filter_commits(records)
        self.assertLessEqual(len(once), len(records))
        self.assertEqual(filter_commits(once), once)


class SplitTests(SimpleTestCase):
    def assertPartition(self, splits, records):
        ids = [record.commit_id for part in (splits.train, splits.valid, splits.test) for record in part]
        self.assertEqual(sorted(ids), sorted(record.commit_id for record in records))
        self.assertEqual(len(ids), len(set(ids)))

    def test_by_commit(self):
        records = toy_corpus(100)
        splits = split(records, SplitSpec(seed=3))
        self.assertEqual(splits.sizes(), (80, 10, 10))
        self.assertPartition(splits, records)
        self.assertEqual(split(list(reversed(records)), SplitSpec(seed=3)).to_dict(), splits.to_dict())

    def test_by_timestamp(self):
        records = [toy_record(i, project='solo') for i in range(10)]
        spec = SplitSpec(strategy='by_timestamp', holdout=0.2, valid_share=0.1)
        splits = split(records, spec)
        self.assertEqual([r.commit_id for r in splits.train], [f"c{i:04d}" for i in range(7)])
        self.assertEqual([r.commit_id for r in splits.valid], ['c0007'])
        self.assertEqual([r.commit_id for r in splits.test], ['c0008', 'c0009'])

    def test_by_project(self):
        records = toy_corpus(40)
        splits = split(records, SplitSpec(strategy='by_project'))
        self.assertPartition(splits, records)
        projects = [{record.project for record in part} for part in (splits.train, splits.valid, splits.test)]
        self.assertTrue(all(projects))
        self.assertFalse(projects[0] & projects[1] or projects[0] & projects[2] or projects[1] & projects[2])

    def test_by_project_needs_three_projects(self):
        records = [toy_record(i, project=f"p{i % 2}") for i in range(6)]
        with self.assertRaises(TooFewProjects):
            split(records, SplitSpec(strategy='by_project'))


class VocabularyTests(SimpleTestCase):
    def example(self, leaf, target):
        path = AstPath(leaf, (NodeType.NameExpr, NodeType.AssignExpr, NodeType.NameExpr), leaf)
        return Example(toy_record(0), TokenGroups(), PathContextSet(added=[path]), TargetMessage(target))

    def test_build_vocab(self):
        vocabularies = build_vocab([
            self.example('onOrAfter', ['fix', 'bug']),
            self.example('x', ['fix', 'typo']),
        ])
        subtokens = vocabularies['subtoken']
        for token in ('on', 'or', 'after', 'x'):
            self.assertIn(token, subtokens)
        target = vocabularies['target']
        self.assertIn('fix', target)
        self.assertEqual(target.encode(['bug']), [UNK_INDEX])
        self.assertEqual(len(vocabularies['node_type']), 44)

    def test_encode_decode(self):
        vocab = Vocabulary.from_counts('target', Counter({'add': 3, 'fix': 3, 'test': 2, 'rare': 1}))
        self.assertEqual(vocab.itos[4:], ['add', 'fix', 'test'])
        ids = vocab.encode(['fix', 'test'])
        self.assertEqual(vocab.decode(ids), ['fix', 'test'])
        self.assertEqual(vocab.encode(['rare']), [UNK_INDEX])
        self.assertEqual(vocab.decode(ids + [EOS_INDEX] + ids, strip=True), ['fix', 'test'])

    def test_node_type_indices_follow_ids(self):
        vocab = node_type_vocabulary()
        for node in NodeType:
            self.assertEqual(vocab.index(node.name), 4 + node.id)

    def test_save_and_load(self):
        vocabularies = {'target': Vocabulary('target', ['fix', 'add'])}
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'vocab.json'
            save_vocabularies(vocabularies, path)
            loaded = load_vocabularies(path)
        self.assertEqual(loaded['target'].digest(), vocabularies['target'].digest())


class PrepareExamplesTests(SimpleTestCase):
    def test_examples_in_input_order(self):
        records = toy_corpus(6)
        examples = prepare_examples(records, seed=13)
        self.assertEqual([example.commit_id for example in examples], [record.commit_id for record in records])
        self.assertEqual(examples[0].target.tokens, ['use', 'factor', 'to', 'scale', 'total'])
        self.assertIn('factor', examples[0].diff_tokens)

    def test_worker_pool_matches_serial(self):
        records = toy_corpus(6)
        serial = prepare_examples(records, seed=13)
        pooled = prepare_examples(records, seed=13, workers=2)
        self.assertEqual([e.contexts for e in pooled], [e.contexts for e in serial])

    def test_unusable_records_are_skipped(self):
        records = [toy_record(0), replace(toy_record(1), commit_id='garbled', diff='not a diff')]
        with self.assertLogs('commits.preprocess', level='WARNING'):
            examples = prepare_examples(records, seed=13)
        self.assertEqual([example.commit_id for example in examples], ['c0000'])
