import os
import sys

# Sphinx configuration of the isr documentation. Build from the repository root:
#   poetry install --with doc && poetry run sphinx-build -b html . _build/html

sys.path.insert(0, os.path.abspath("."))

project = "isr"
author = "isr developers"
copyright = f"2023, {author}"
html_title = f"{project} documentation"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
    "sphinx_design",
    "sphinxcontrib.autodoc_pydantic",
]

autodoc_typehints = "both"
autodoc_member_order = "bysource"
autodoc_pydantic_model_show_json = True
autodoc_pydantic_model_show_config_summary = False

exclude_patterns = [
    "_build",
    "Thumbs.db",
    ".DS_Store",
    ".tox",
    ".venv",
    "examples",
    "readme.rst",
    "spec.md",
    "SPEC_FULL.md",
    "DESIGN.md",
]

source_suffix = {".rst": "restructuredtext"}

html_theme = "alabaster"
html_permalinks_icon = "¶"
suppress_warnings = ["config.cache"]
