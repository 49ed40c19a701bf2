import json

from commits.management.base import PipelineCommand
from commits.services import pipeline_service


class Command(PipelineCommand):
    help = 'Score the chosen, retrieved and generated messages against the references'

    def run(self, config, **options):
        report = pipeline_service.evaluate(config)
        self.stdout.write(json.dumps(report, indent=2, sort_keys=True))
        mixture = report['mixture']
        self.success(
            f"BLEU-4 {report['hybrid']['bleu4']:.2f} over {report['count']} commits "
            f"(generated {mixture['generated']:.2%}, retrieved {mixture['retrieved']:.2%})"
        )
