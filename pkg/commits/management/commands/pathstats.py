import json

from django.core.management.base import CommandError

from commits.management.base import PipelineCommand
from commits.services import format_table, pipeline_service


def parse_caps(value: str):
    try:
        caps = [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise CommandError(f"--caps expects comma-separated integers, got {value!r}", returncode=2) from None
    if not caps or min(caps) < 1:
        raise CommandError('--caps needs at least one positive cap', returncode=2) from None
    return caps


class Command(PipelineCommand):
    help = 'Retrain the generator for several path caps and tabulate the metrics'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--caps', default='30,80', help='Comma-separated path caps (default 30,80)')

    def run(self, config, **options):
        table = pipeline_service.pathstats(config, parse_caps(options['caps']), progress=options['progress'])
        self.stdout.write(json.dumps(table, indent=2))
        self.stdout.write(format_table(table))
        self.success(f"Path-cap sweep over {len(table)} caps written")
