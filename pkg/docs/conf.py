import sys
from configparser import ConfigParser
from pathlib import Path

root = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(root))

metadata = ConfigParser()
metadata.read(root / 'setup.cfg')

project = metadata['metadata']['name']
release = metadata['metadata']['version']

extensions = ['sphinx.ext.autodoc']
autodoc_member_order = 'bysource'
exclude_patterns = ['_build']
