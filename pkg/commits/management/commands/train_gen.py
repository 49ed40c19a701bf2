from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Train the AST-path message generator'

    def run(self, config, **options):
        report = pipeline_service.train_generator(config, progress=options['progress'])
        self.success(
            f"Generator: {report.epochs_run} epochs, best epoch {report.best_epoch}, "
            f"valid loss {report.best_valid_loss:.4f}, checkpoint {report.checkpoint_sha256[:12]}"
        )
