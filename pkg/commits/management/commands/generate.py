from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Generate, retrieve and rank a message for every test commit'

    def run(self, config, **options):
        rows = pipeline_service.generate(config)
        generated = sum(1 for row in rows if row['chosen'] == 'generated')
        self.success(f"{len(rows)} messages written ({generated} generated, {len(rows) - generated} retrieved)")
