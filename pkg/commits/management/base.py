"""Shared options and error handling for the pipeline management commands."""
import logging

from django.core.management.base import BaseCommand, CommandError

from commits.config import PipelineConfig, load_config
from commits.exceptions import CommitsError

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """Builds the effective PipelineConfig and maps pipeline errors to exit codes."""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON file with nested pipeline settings')
        parser.add_argument('--set', action='append', default=[], dest='overrides', metavar='KEY=VALUE',
                            help='Override one setting, e.g. model.max_paths=30 (repeatable)')
        parser.add_argument('--output-dir', help='Artifact directory')
        parser.add_argument('--seed', type=int, help='Master seed')
        parser.add_argument('--workers', type=int, help='Processes for data preparation')
        parser.add_argument('--progress', action='store_true', help='Show progress bars')

    def build_config(self, options) -> PipelineConfig:
        config = load_config(options.get('config'), options.get('overrides') or [])
        if options.get('output_dir'):
            config.output_dir = options['output_dir']
        if options.get('workers') is not None:
            config.workers = options['workers']
        if options.get('seed') is not None:
            config.seed = config.split.seed = options['seed']
        return config

    def handle(self, *args, **options):
        try:
            config = self.build_config(options)
            self.run(config, **{key: value for key, value in options.items() if key != 'config'})
        except CommitsError as exc:
            logger.error("%s failed: %s", self.__module__.rsplit('.', 1)[-1], exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    def run(self, config: PipelineConfig, **options):
        raise NotImplementedError

    def success(self, message: str) -> None:
        self.stdout.write(self.style.SUCCESS(message))
