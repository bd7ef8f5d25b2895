# -*- coding: utf-8 -*-
#
# pytqa documentation build configuration file.

import sys
import os
import sphinx_bootstrap_theme

sys.path.insert(0, os.path.abspath('..'))

import pytqa

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.mathjax',
              'sphinxcontrib.napoleon']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'pytqa'
copyright = u'2016, The pytqa developers'

version = pytqa.__version__
release = pytqa.__version__

exclude_patterns = ['_build']
autoclass_content = 'both'
pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------

html_theme = 'bootstrap'
html_theme_path = sphinx_bootstrap_theme.get_html_theme_path()
html_theme_options = {
    'navbar_title': "pytqa",
    'navbar_site_name': "More",
    'navbar_links': [
        ("Installation", "rst/INSTALLATION.html", True),
        ("Walkthrough", "intro.html", True),
        ("API", "API.html", True),
    ],
    'navbar_pagenav': False,
    'navbar_sidebarrel': False,
    'globaltoc_depth': 2,
    'source_link_position': '',
    'bootswatch_theme': 'cosmo'
}
html_title = "pytqa"
html_short_title = "pytqa"
html_static_path = []
htmlhelp_basename = 'pytqadoc'

# -- Options for LaTeX and manual page output ----------------------------

latex_documents = [
    ('index', 'pytqa.tex', u'pytqa Documentation',
     u'The pytqa developers', 'manual'),
]

man_pages = [
    ('index', 'pytqa', u'pytqa Documentation',
     [u'The pytqa developers'], 1)
]

texinfo_documents = [
    ('index', 'pytqa', u'pytqa Documentation',
     u'The pytqa developers', 'pytqa',
     'Weakly supervised question answering over tables',
     'Miscellaneous'),
]
