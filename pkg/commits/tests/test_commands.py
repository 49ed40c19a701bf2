import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from commits.metrics import METRIC_NAMES
from commits.services import ARTIFACTS
from commits.tests.fixtures import toy_corpus, toy_record, write_dataset

TOY_CONFIG = {
    'model': {
        'embedding_size': 8, 'hidden_size': 8, 'epochs': 2, 'batch_size': 8, 'patience': 2,
        'beam_width': 2, 'max_len': 6, 'min_freq': 1, 'max_paths': 20,
    },
    'ranker': {
        'embedding_size': 4, 'kernels': 2, 'max_diff_len': 16, 'max_msg_len': 8, 'epochs': 2, 'batch_size': 8,
    },
}

STAGES = ('split', 'train_gen', 'retrieve', 'train_rank', 'generate', 'evaluate')


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.config_file = self.dir / 'toy.json'
        self.config_file.write_text(json.dumps(TOY_CONFIG))
        self.dataset = write_dataset(toy_corpus(40), self.dir / 'toy.jsonl')

    def call(self, name, *args, output='out'):
        stdout = StringIO()
        call_command(name, *args, '--config', str(self.config_file), '--output-dir', str(self.dir / output),
                     stdout=stdout)
        return stdout.getvalue()

    def run_pipeline(self, output='out'):
        self.call('ingest', str(self.dataset), output=output)
        for stage in STAGES:
            self.call(stage, output=output)
        return self.dir / output

    def assertExitCode(self, code, name, *args, output='out'):
        with self.assertRaises(CommandError) as caught:
            self.call(name, *args, output=output)
        self.assertEqual(caught.exception.returncode, code)
        return caught.exception


class PipelineTests(CommandTestCase):
    def test_full_pipeline(self):
        out = self.run_pipeline()
        for name in ARTIFACTS:
            if not name.startswith('pathstats'):
                self.assertTrue((out / ARTIFACTS[name]).exists(), name)

        report = json.loads((out / 'report.json').read_text())
        self.assertEqual(report['count'], 4)
        for section in ('hybrid', 'retrieval', 'generation'):
            self.assertEqual(sorted(report[section]), sorted(METRIC_NAMES))
            for value in report[section].values():
                self.assertTrue(0.0 <= value <= 100.0)
        self.assertAlmostEqual(sum(report['mixture'].values()), 1.0)

        rows = [json.loads(line) for line in (out / 'generated.jsonl').read_text().splitlines()]
        self.assertEqual(len(rows), 4)
        for row in rows:
            self.assertIn(row['chosen'], ('retrieved', 'generated'))
            self.assertEqual(row['message'], row['msg_g'] if row['chosen'] == 'generated' else row['msg_t'])

        filter_report = json.loads((out / 'filter_report.json').read_text())
        self.assertEqual((filter_report['total'], filter_report['kept']), (40, 40))
        config = json.loads((out / 'config.json').read_text())
        self.assertEqual(config['model']['hidden_size'], 8)
        self.assertEqual(len((out / 'samples.csv').read_text().splitlines()), 5)

    def test_stages_need_their_inputs(self):
        error = self.assertExitCode(4, 'split')
        self.assertIn('records', str(error))
        self.call('ingest', str(self.dataset))
        self.call('split')
        self.call('train_gen')
        self.call('retrieve')
        error = self.assertExitCode(4, 'generate')
        self.assertIn("'ranker'", str(error))
        self.assertExitCode(4, 'evaluate')

    def test_shape_mismatch_is_refused(self):
        self.call('ingest', str(self.dataset))
        self.call('split')
        self.call('train_gen')
        self.call('retrieve')
        self.assertExitCode(2, 'train_rank', '--set', 'model.hidden_size=16')

    def test_path_cap_sweep(self):
        self.call('ingest', str(self.dataset))
        self.call('split')
        output = self.call('pathstats', '--caps', '5,20')
        table = json.loads((self.dir / 'out' / 'pathstats.json').read_text())
        self.assertEqual([row['cap'] for row in table], [5, 20])
        for row in table:
            self.assertEqual(row['count'], 4)
            for name in METRIC_NAMES:
                self.assertIn(name, row)
        self.assertIn('bleu4', (self.dir / 'out' / 'pathstats.txt').read_text())
        self.assertTrue((self.dir / 'out' / 'pathstats' / 'cap_5' / 'generator.ckpt').exists())
        self.assertIn('cap', output)

    @tag('slow')
    def test_reruns_are_identical(self):
        first, second = self.run_pipeline('first'), self.run_pipeline('second')
        for name in ('generator', 'ranker', 'report', 'generated', 'vocab', 'splits'):
            with self.subTest(artifact=name):
                self.assertEqual((first / ARTIFACTS[name]).read_bytes(), (second / ARTIFACTS[name]).read_bytes())


class ErrorTests(CommandTestCase):
    def test_missing_dataset_is_a_config_error(self):
        self.assertExitCode(2, 'ingest')

    def test_unknown_setting(self):
        self.assertExitCode(2, 'ingest', str(self.dataset), '--set', 'model.wings=2')
        self.assertExitCode(2, 'ingest', str(self.dataset), '--set', 'model.polarity_embeddings="mixed"')

    def test_bad_dataset_is_a_data_error(self):
        data = toy_record(0).to_dict()
        del data['message']
        bad = self.dir / 'bad.jsonl'
        bad.write_text(json.dumps(data) + '\n')
        error = self.assertExitCode(3, 'ingest', str(bad))
        self.assertIn('message', str(error))

    def test_bad_caps(self):
        self.assertExitCode(2, 'pathstats', '--caps', 'thirty')
        self.assertExitCode(2, 'pathstats', '--caps', '0')

    def test_split_strategy_and_seed(self):
        self.call('ingest', str(self.dataset))
        output = self.call('split', '--set', 'split.strategy=by_project')
        self.assertIn('by_project', output)
        splits = json.loads((self.dir / 'out' / 'splits.json').read_text())
        self.assertEqual(sum(len(ids) for ids in splits.values()), 40)
        self.call('split', '--seed', '5')
        reseeded = json.loads((self.dir / 'out' / 'splits.json').read_text())
        self.call('split', '--seed', '5')
        self.assertEqual(json.loads((self.dir / 'out' / 'splits.json').read_text()), reseeded)
