#!/usr/bin/env python
#
# pushtorch documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

import pushtorch  # noqa: E402,F401

# fmt: off
__version__ = '0.1.0'
# fmt: on

# -- General configuration ---------------------------------------------

extensions = ["sphinx.ext.autodoc", "sphinx.ext.viewcode"]

templates_path = ["_templates"]

source_suffix = ".rst"

master_doc = "index"

project = "pushtorch"
copyright = "2026, pushtorch developers"
author = "pushtorch developers"

version = __version__
release = __version__

language = None

exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

pygments_style = "sphinx"

todo_include_todos = False

# -- Options for HTML output -------------------------------------------

html_theme = "sphinx_rtd_theme"

html_static_path = []

# -- Options for HTMLHelp output ---------------------------------------

htmlhelp_basename = "pushtorchdoc"

# -- Options for LaTeX output ------------------------------------------

latex_documents = [
    (
        master_doc,
        "pushtorch.tex",
        "pushtorch Documentation",
        author,
        "manual",
    ),
]

# -- Options for manual page output ------------------------------------

man_pages = [(master_doc, "pushtorch", "pushtorch Documentation", [author], 1)]
