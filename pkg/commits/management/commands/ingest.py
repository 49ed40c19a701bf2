from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Read a JSON-lines commit dataset, clean it and store the kept records'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('dataset', nargs='?', help='JSON-lines dataset (or set dataset=...)')

    def run(self, config, **options):
        if options.get('dataset'):
            config.dataset = options['dataset']
        report = pipeline_service.ingest(config)
        dropped = ', '.join(f"{rule}={count}" for rule, count in report.dropped.items() if count) or 'none'
        self.success(f"Kept {report.kept} of {report.total} commits (dropped: {dropped})")
