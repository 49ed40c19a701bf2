import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'commit_writer.settings')
django.setup()
