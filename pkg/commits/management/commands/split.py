from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Partition the ingested commits into train, valid and test'

    def run(self, config, **options):
        splits = pipeline_service.split(config)
        train, valid, test = splits.sizes()
        self.success(f"{config.split.strategy}: train={train} valid={valid} test={test}")
