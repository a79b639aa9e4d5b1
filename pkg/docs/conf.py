# Sphinx configuration of the oct-levelset documentation.
#
# The API pages are generated with autodoc from the numpy style docstrings
# under src/, the theory page relies on MathJax for the cost and gradient
# formulas.

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

# -- Project information -----------------------------------------------------

project = 'OCT Levelset'
copyright = '2024, Hkxs'
author = 'Hkxs'
release = '0.1.0'

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
]

napoleon_google_docstring = False
napoleon_numpy_docstring = True
autodoc_member_order = "bysource"
autodoc_typehints = "description"
# numpy.typing aliases render unreadably in signatures
autodoc_type_aliases = {"npt.NDArray": "numpy.ndarray", "npt.ArrayLike": "array_like"}

templates_path = []
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = []
