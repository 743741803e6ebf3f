"""Command line interface.

::

    triplestack canon FILE [--html | --mode html|xml] [--indent]
    triplestack rdf parse FILE [--base IRI]
    triplestack rdf roundtrip FILE
    triplestack db snapshot DIR [SOURCE ...]
    triplestack db verify DIR
    triplestack serve [--port N] [--workers K] [--db DIR] [--entailment NAME]

``serve`` options fall back to the environment variables ``PORT``,
``WORKERS``, ``DB`` and ``ENTAILMENT`` when not given on the command line.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading

from . import markup, rdfio
from .persist import PersistError, Persistence, verify_directory
from .store import Store


def _canon(args) -> int:
    with open(args.file, "rb") as f:
        nodes = markup.parse_tree(f, mode=args.mode, source_name=args.file)
    sys.stdout.write(markup.serialize(nodes, layout="indented" if args.indent else "compact") + "\n")
    return 0


def _rdf_parse(args) -> int:
    def emit(triples, _location):
        for t in triples:
            sys.stdout.write(rdfio.format_triple(t) + "\n")

    with open(args.file, "rb") as f:
        rdfio.process_rdf(f, args.source or os.path.basename(args.file), emit, base=args.base)
    return 0


def _rdf_roundtrip(args) -> int:
    name = os.path.basename(args.file)
    with open(args.file, "rb") as f:
        first = rdfio.load_rdf(f, name, base=args.base)
    text = rdfio.to_rdf_xml(first)
    second = rdfio.load_rdf(text, name)
    same = rdfio.isomorphic(first, second)
    print(f"{len(first)} triples, round trip {'isomorphic' if same else 'DIFFERS'}")
    return 0 if same else 1


def _db_snapshot(args) -> int:
    store = Store()
    persistence = Persistence(store)
    persistence.attach(args.dir)
    try:
        sources = args.sources or sorted(store.sources())
        for source in sources:
            persistence.save_snapshot(source)
            print(f"{source}: {store.sources().get(source, 0)} triples")
    finally:
        persistence.detach()
    return 0


def _db_verify(args) -> int:
    try:
        for line in verify_directory(args.dir):
            print(line)
    except PersistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _env(name, value, default, convert=str):
    """Command-line value, else the environment variable, else *default*."""
    if value is not None:
        return value
    raw = os.environ.get(name)
    return convert(raw) if raw else default


def _serve(args) -> int:
    from .service import Service, ServiceConfig

    config = ServiceConfig(
        port=_env("PORT", args.port, 8080, int),
        workers=_env("WORKERS", args.workers, 4, int),
        db=_env("DB", args.db, None),
        entailment=_env("ENTAILMENT", args.entailment, "rdfs"),
        host=args.host,
    )
    service = Service(config)
    done = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: done.set())
    service.start()
    print(f"serving on {service.url} (workers {config.workers}, entailment {config.entailment})",
          flush=True)
    try:
        done.wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triplestack", description="RDF storage, query and web toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("canon", help="print the canonical form of an XML or HTML document")
    p.add_argument("file")
    p.add_argument("--mode", choices=("html", "xml"), default="xml")
    p.add_argument("--html", dest="mode", action="store_const", const="html", help="same as --mode html")
    p.add_argument("--indent", action="store_true")
    p.set_defaults(func=_canon)

    rdf = sub.add_parser("rdf", help="RDF/XML tools").add_subparsers(dest="rdf_command", required=True)
    p = rdf.add_parser("parse", help="print the triples of an RDF/XML file")
    p.add_argument("file")
    p.add_argument("--base")
    p.add_argument("--source")
    p.set_defaults(func=_rdf_parse)
    p = rdf.add_parser("roundtrip", help="check that writing and reparsing preserves the graph")
    p.add_argument("file")
    p.add_argument("--base")
    p.set_defaults(func=_rdf_roundtrip)

    db = sub.add_parser("db", help="persistence directory tools").add_subparsers(dest="db_command", required=True)
    p = db.add_parser("snapshot", help="write snapshots and clear journals")
    p.add_argument("dir")
    p.add_argument("sources", nargs="*")
    p.set_defaults(func=_db_snapshot)
    p = db.add_parser("verify", help="check snapshot and journal files")
    p.add_argument("dir")
    p.set_defaults(func=_db_verify)

    p = sub.add_parser("serve", help="run the HTTP server")
    p.add_argument("--port", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--db")
    p.add_argument("--entailment")
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, markup.MarkupError, rdfio.RdfError, PersistError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
