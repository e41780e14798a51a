import toml

project = "squaremamba"
copyright = "2024, squaremamba developers"
author = "squaremamba developers"

extensions = [
    "myst_parser",
    "sphinx_copybutton",
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.autosummary",
    "sphinx.ext.viewcode",
]

exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

html_theme = "sphinx_book_theme"

pyproject = toml.load("../pyproject.toml")
version = pyproject["project"]["version"]
html_short_title = "squaremamba"
html_title = f"{html_short_title}"

source_suffix = {
    ".rst": "restructuredtext",
    ".md": "markdown",
}

root_doc = "index"

myst_enable_extensions = [
    "dollarmath",
]

rst_prolog = """
.. |squaremamba| replace:: *squaremamba*
"""

autodoc_typehints = "signature"
autoclass_content = "both"
