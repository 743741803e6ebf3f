"""RDF storage, query and web serving toolkit.

Modules: ``markup`` (XML/HTML parsing and serialization), ``htmlgen``
(HTML generation), ``rdfio`` (RDF/XML), ``store`` (triple store),
``persist`` (snapshots and journals), ``query`` (conjunctive queries),
``httpd`` (HTTP server and client) and ``service`` (the assembled server).
"""

__version__ = "0.1.0"
