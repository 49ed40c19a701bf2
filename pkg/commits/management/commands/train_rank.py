from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Build the ranking dataset and train the candidate ranker'

    def run(self, config, **options):
        report = pipeline_service.train_ranker(config, progress=options['progress'])
        self.success(
            f"Ranker: {report.epochs_run} epochs, best epoch {report.best_epoch}, "
            f"valid loss {report.best_valid_loss:.4f}, checkpoint {report.checkpoint_sha256[:12]}"
        )
