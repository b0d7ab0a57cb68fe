import ast
from pathlib import Path


def get_version():
    """Version string declared in __manifest__.py."""
    manifest = ast.literal_eval((Path(__file__).parent / '__manifest__.py').read_text(encoding='utf-8'))
    return manifest['version']
