from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Index training diffs and retrieve the nearest message for each test diff'

    def run(self, config, **options):
        index, rows = pipeline_service.build_index(config)
        self.success(f"Indexed {len(index)} diffs, retrieved messages for {len(rows)} test commits")
