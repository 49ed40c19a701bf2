"""Pipeline stages over the artifact directory, shared by the management commands."""
import copy
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

from . import ast2seq
from .ast2seq import Ast2Seq
from .config import PipelineConfig
from .exceptions import ConfigError, ConfigMismatch, MissingArtifact
from .metrics import METRIC_NAMES, MetricReport, corpus_report
from .params import load_checkpoint
from .preprocess import (
    CommitFilter, Example, FilterReport, Splits, Vocabulary, build_vocab, dump_records, ingest,
    load_vocabularies, prepare_examples, save_vocabularies, split,
)
from .ranker import ConvNetRanker, build_ranker_vocab, build_ranking_dataset, select, train_ranker
from .retrieval import IndexedDiff, TfIdfIndex, build_index
from .training import TrainingReport

logger = logging.getLogger(__name__)

ARTIFACTS = {
    'records': 'records.jsonl',
    'filter_report': 'filter_report.json',
    'splits': 'splits.json',
    'vocab': 'vocab.json',
    'generator': 'generator.ckpt',
    'generator_manifest': 'generator.manifest.json',
    'generator_report': 'train_gen_report.json',
    'index': 'index.npz',
    'retrieved': 'retrieved.jsonl',
    'ranking_dataset': 'ranking_dataset.jsonl',
    'ranker_vocab': 'ranker_vocab.json',
    'ranker': 'ranker.ckpt',
    'ranker_manifest': 'ranker.manifest.json',
    'ranker_report': 'train_rank_report.json',
    'generated': 'generated.jsonl',
    'report': 'report.json',
    'samples': 'samples.csv',
    'pathstats': 'pathstats.json',
    'pathstats_table': 'pathstats.txt',
    'config': 'config.json',
}

# fields that decide parameter shapes; the rest may change between training and inference
GENERATOR_SHAPE_FIELDS = ('embedding_size', 'hidden_size', 'polarity_embeddings')
RANKER_SHAPE_FIELDS = ('embedding_size', 'kernels', 'kernel_size', 'pool', 'stride', 'max_diff_len', 'max_msg_len')


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, data: Any) -> None:
    with Path(path).open('w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write('\n')


def read_json(path) -> Any:
    with Path(path).open(encoding='utf-8') as handle:
        return json.load(handle)


def write_jsonl(path, rows: Sequence[Dict[str, Any]]) -> None:
    with Path(path).open('w', encoding='utf-8') as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + '\n')


def read_jsonl(path) -> List[Dict[str, Any]]:
    with Path(path).open(encoding='utf-8') as handle:
        return [json.loads(line) for line in handle if line.strip()]


class PipelineService:
    """Runs one pipeline stage at a time, reading and writing artifacts under ``config.output_dir``."""

    def path(self, config: PipelineConfig, name: str) -> Path:
        return config.output_path / ARTIFACTS[name]

    def require(self, config: PipelineConfig, *names: str) -> List[Path]:
        paths = []
        for name in names:
            path = self.path(config, name)
            if not path.exists():
                raise MissingArtifact(name, str(path))
            paths.append(path)
        return paths

    def prepare_output(self, config: PipelineConfig) -> None:
        config.output_path.mkdir(parents=True, exist_ok=True)
        self.path(config, 'config').write_text(config.to_json() + '\n', encoding='utf-8')

    # ingest / split

    def ingest(self, config: PipelineConfig) -> FilterReport:
        if not config.dataset:
            raise ConfigError('No dataset given; set dataset=<path to JSON lines>')
        self.prepare_output(config)
        records = ingest(config.dataset)
        cleaner = CommitFilter(seed=config.seed, max_paths=config.model.max_paths,
                               max_path_nodes=config.model.max_path_nodes)
        kept = cleaner.apply(records)
        dump_records(kept, self.path(config, 'records'))
        write_json(self.path(config, 'filter_report'), cleaner.report.to_dict())
        return cleaner.report

    def load_records(self, config: PipelineConfig):
        (path,) = self.require(config, 'records')
        return ingest(path)

    def split(self, config: PipelineConfig) -> Splits:
        records = self.load_records(config)
        self.prepare_output(config)
        splits = split(records, config.split)
        write_json(self.path(config, 'splits'), splits.to_dict())
        return splits

    def load_splits(self, config: PipelineConfig) -> Splits:
        records = self.load_records(config)
        (path,) = self.require(config, 'splits')
        return Splits.from_ids(read_json(path), records)

    def examples(self, config: PipelineConfig, records) -> List[Example]:
        return prepare_examples(records, config.seed, max_paths=config.model.max_paths,
                                max_path_nodes=config.model.max_path_nodes, workers=config.workers)

    # manifests

    def _write_manifest(self, path: Path, checkpoint_sha256: str, vocabularies: Dict[str, Vocabulary],
                        section: Dict[str, Any]) -> None:
        write_json(path, {
            'checkpoint_sha256': checkpoint_sha256,
            'vocab': {name: vocab.digest() for name, vocab in vocabularies.items()},
            'config': section,
        })

    def _check_manifest(self, manifest_path: Path, checkpoint_path: Path, vocabularies: Dict[str, Vocabulary],
                        section: Dict[str, Any], shape_fields: Sequence[str]) -> None:
        manifest = read_json(manifest_path)
        if manifest.get('checkpoint_sha256') != file_sha256(checkpoint_path):
            raise ConfigMismatch(f"{checkpoint_path.name} does not match {manifest_path.name}")
        digests = {name: vocab.digest() for name, vocab in vocabularies.items()}
        if manifest.get('vocab') != digests:
            raise ConfigMismatch(f"Vocabularies do not match {manifest_path.name}")
        trained = manifest.get('config', {})
        changed = [name for name in shape_fields if trained.get(name) != section.get(name)]
        if changed:
            raise ConfigMismatch(f"{checkpoint_path.name} was trained with different {', '.join(changed)}")

    # generator

    def train_generator(self, config: PipelineConfig, progress: bool = False) -> TrainingReport:
        splits = self.load_splits(config)
        self.prepare_output(config)
        train_examples = self.examples(config, splits.train)
        valid_examples = self.examples(config, splits.valid)
        vocabularies = build_vocab(train_examples, min_freq=config.model.min_freq)
        save_vocabularies(vocabularies, self.path(config, 'vocab'))
        model = Ast2Seq(config.model, vocabularies, seed=config.seed)
        report = ast2seq.train(model, train_examples, valid_examples, seed=config.seed,
                               checkpoint_path=self.path(config, 'generator'), progress=progress)
        self._write_manifest(self.path(config, 'generator_manifest'), report.checkpoint_sha256,
                             vocabularies, config.to_dict()['model'])
        write_json(self.path(config, 'generator_report'), report.to_dict())
        return report

    def load_generator(self, config: PipelineConfig) -> Ast2Seq:
        vocab_path, checkpoint, manifest = self.require(config, 'vocab', 'generator', 'generator_manifest')
        vocabularies = load_vocabularies(vocab_path)
        self._check_manifest(manifest, checkpoint, vocabularies, config.to_dict()['model'], GENERATOR_SHAPE_FIELDS)
        model = Ast2Seq(config.model, vocabularies, seed=config.seed)
        load_checkpoint(checkpoint, model.store)
        return model

    # retrieval

    def build_index(self, config: PipelineConfig) -> Tuple[TfIdfIndex, List[Dict[str, Any]]]:
        """Index the training diffs and retrieve the nearest message for every test diff."""
        splits = self.load_splits(config)
        self.prepare_output(config)
        index = build_index([
            IndexedDiff(example.commit_id, example.diff_tokens, example.target.tokens)
            for example in self.examples(config, splits.train)
        ])
        index.save(self.path(config, 'index'))
        rows = []
        for example in self.examples(config, splits.test):
            result = index.retrieve(example.diff_tokens)
            rows.append({'commit_id': example.commit_id, 'retrieved_commit_id': result.commit_id,
                         'cosine': result.cosine, 'message': result.message})
        write_jsonl(self.path(config, 'retrieved'), rows)
        return index, rows

    def load_index(self, config: PipelineConfig) -> TfIdfIndex:
        (path,) = self.require(config, 'index')
        return TfIdfIndex.load(path)

    # ranker

    def train_ranker(self, config: PipelineConfig, progress: bool = False) -> TrainingReport:
        self.require(config, 'generator', 'index')
        splits = self.load_splits(config)
        model = self.load_generator(config)
        index = self.load_index(config)
        self.prepare_output(config)
        dataset = build_ranking_dataset(self.examples(config, splits.train), model, index,
                                        beam_width=config.model.beam_width, progress=progress)
        write_jsonl(self.path(config, 'ranking_dataset'), [row.to_dict() for row in dataset.rows])
        vocabularies = build_ranker_vocab(dataset.rows, min_freq=config.ranker.min_freq)
        save_vocabularies(vocabularies, self.path(config, 'ranker_vocab'))
        ranker = ConvNetRanker(config.ranker, vocabularies, seed=config.seed)
        report = train_ranker(ranker, dataset.rows, seed=config.seed,
                              checkpoint_path=self.path(config, 'ranker'), progress=progress)
        self._write_manifest(self.path(config, 'ranker_manifest'), report.checkpoint_sha256,
                             vocabularies, config.to_dict()['ranker'])
        write_json(self.path(config, 'ranker_report'), dict(report.to_dict(), skipped=dataset.skipped))
        return report

    def load_ranker(self, config: PipelineConfig) -> ConvNetRanker:
        vocab_path, checkpoint, manifest = self.require(config, 'ranker_vocab', 'ranker', 'ranker_manifest')
        vocabularies = load_vocabularies(vocab_path)
        self._check_manifest(manifest, checkpoint, vocabularies, config.to_dict()['ranker'], RANKER_SHAPE_FIELDS)
        ranker = ConvNetRanker(config.ranker, vocabularies, seed=config.seed)
        load_checkpoint(checkpoint, ranker.store)
        return ranker

    # generation and evaluation

    def generate(self, config: PipelineConfig) -> List[Dict[str, Any]]:
        self.require(config, 'generator', 'index', 'ranker')
        splits = self.load_splits(config)
        model = self.load_generator(config)
        index = self.load_index(config)
        ranker = self.load_ranker(config)
        self.prepare_output(config)
        rows = []
        for example in self.examples(config, splits.test):
            msg_g = model.generate(example.contexts, beam_width=config.model.beam_width)
            retrieved = index.retrieve(example.diff_tokens)
            pair = select(example.diff_tokens, retrieved.message, msg_g, ranker, commit_id=example.commit_id)
            row = pair.to_row()
            row.update({
                'reference': example.target.tokens,
                'msg_g': pair.msg_g,
                'msg_t': pair.msg_t,
                'retrieved_commit_id': retrieved.commit_id,
                'cosine': retrieved.cosine,
                'message': pair.message,
            })
            rows.append(row)
        write_jsonl(self.path(config, 'generated'), rows)
        logger.info("Generated messages for %d test commits", len(rows))
        return rows

    def evaluate(self, config: PipelineConfig) -> Dict[str, Any]:
        (path,) = self.require(config, 'generated')
        rows = read_jsonl(path)
        self.prepare_output(config)
        mode = config.bleu_mode
        generated = sum(1 for row in rows if row['chosen'] == 'generated')
        total = len(rows)
        report = {
            'count': total,
            'bleu_mode': mode,
            'hybrid': corpus_report([(row['message'], row['reference']) for row in rows], mode).to_dict(),
            'retrieval': corpus_report([(row['msg_t'], row['reference']) for row in rows], mode).to_dict(),
            'generation': corpus_report([(row['msg_g'], row['reference']) for row in rows], mode).to_dict(),
            'mixture': {
                'generated': generated / total,
                'retrieved': (total - generated) / total,
            },
        }
        write_json(self.path(config, 'report'), report)
        with self.path(config, 'samples').open('w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(['commit_id', 'reference', 'retrieved', 'generated', 'chosen', 'message'])
            for row in rows:
                writer.writerow([row['commit_id'], ' '.join(row['reference']), ' '.join(row['msg_t']),
                                 ' '.join(row['msg_g']), row['chosen'], ' '.join(row['message'])])
        return report

    # path-cap sweep

    def pathstats(self, config: PipelineConfig, caps: Sequence[int], progress: bool = False) -> List[Dict[str, Any]]:
        """Retrain the generator per path cap and report generation-only metrics on the test split."""
        splits = self.load_splits(config)
        self.prepare_output(config)
        table = []
        for cap in caps:
            sweep = copy.deepcopy(config)
            sweep.model.max_paths = int(cap)
            sweep.output_dir = str(config.output_path / 'pathstats' / f"cap_{cap}")
            sweep.output_path.mkdir(parents=True, exist_ok=True)
            write_json(self.path(sweep, 'splits'), splits.to_dict())
            dump_records(splits.train + splits.valid + splits.test, self.path(sweep, 'records'))
            self.train_generator(sweep, progress=progress)
            model = self.load_generator(sweep)
            pairs = [(model.generate(example.contexts, beam_width=sweep.model.beam_width), example.target.tokens)
                     for example in self.examples(sweep, splits.test)]
            metrics = corpus_report(pairs, config.bleu_mode) if pairs else MetricReport()
            table.append(dict(cap=int(cap), count=len(pairs), **metrics.to_dict()))
            logger.info("Path cap %s: %s", cap, metrics)
        write_json(self.path(config, 'pathstats'), table)
        self.path(config, 'pathstats_table').write_text(format_table(table), encoding='utf-8')
        return table


def format_table(table: Sequence[Dict[str, Any]]) -> str:
    header = f"{'cap':>6}" + ''.join(f"{name:>10}" for name in METRIC_NAMES)
    lines = [header, '-' * len(header)]
    for row in table:
        lines.append(f"{row['cap']:>6}" + ''.join(f"{row[name]:>10.2f}" for name in METRIC_NAMES))
    return '\n'.join(lines) + '\n'


# Global service instance
pipeline_service = PipelineService()
