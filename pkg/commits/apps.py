from django.apps import AppConfig


class CommitsConfig(AppConfig):
    name = 'commits'
    verbose_name = 'Commit message generation'
