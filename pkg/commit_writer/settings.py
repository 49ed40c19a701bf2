"""
Django settings for commit_writer project.

The project has no web surface: Django provides settings, logging
configuration, management commands and the test runner for the commit
message pipeline in the ``commits`` app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only needed by Django internals; nothing is signed.
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'commit-writer-local-only')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'commits',
]

# Artifacts are files on disk, no database is used.
DATABASES = {}

USE_TZ = True

TIME_ZONE = 'UTC'


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'commits': {
            'handlers': ['console'],
            'level': os.getenv('COMMITS_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Pipeline configuration (overridable per command with --config / --set)

COMMITS = {
    'OUTPUT_DIR': os.getenv('COMMITS_OUTPUT_DIR', str(BASE_DIR / 'artifacts')),
    'SEED': int(os.getenv('COMMITS_SEED', '13')),
    'WORKERS': int(os.getenv('COMMITS_WORKERS', '1')),
    'PRESET': os.getenv('COMMITS_PRESET', 'desk'),
}
