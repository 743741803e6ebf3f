"""Durable storage: one binary snapshot plus one text journal per source.

Snapshot layout (all integers are unsigned LEB128 varints unless noted)::

    "TKQL"  version:u8  source:str
    nstrings  str*                      # str = varint byte length + UTF-8
    ntriples  triple*
    ntriples:u32le                      # trailer, must repeat the count

    triple = subject:idx predicate:idx object line
    object = 0 idx                      # IRI or blank node
           | 1 text:idx                 # plain literal
           | 2 lang:idx text:idx
           | 3 datatype:idx text:idx

Journal lines are terms: ``begin(Id, Time)``, ``assert(S, P, O, Line)``,
``retract(S, P, O)``, ``update(S, P, O, S2, P2, O2)`` and ``end(Id)``, where
resources are JSON strings and literals are ``literal(Text)``,
``lang(Lang, Text)`` or ``type(Datatype, Text)``.
"""

from __future__ import annotations

import json
import logging
import os
import re
import struct
import time
from typing import Optional
from urllib.parse import quote, unquote

from .rdfio import BNode, Iri, Literal, Triple
from .store import Event, Store, gc_paused

log = logging.getLogger(__name__)

MAGIC = b"TKQL"
VERSION = 1
SNAPSHOT_EXT = ".snap"
JOURNAL_EXT = ".journal"


class PersistError(Exception):
    """Unreadable snapshot or journal; names the file and offset/line."""

    def __init__(self, path, where, message):
        self.path = path
        self.where = where
        super().__init__(f"{path}:{where}: {message}")


def _resource(text):
    return BNode(text) if text.startswith("__") else Iri(text)


# -- snapshot encoding -------------------------------------------------------------

_VARINT = re.compile(rb"[\x80-\xff]*[\x00-\x7f]", re.S)


def _varint_value(token: bytes) -> int:
    n = 0
    for b in reversed(token):
        n = (n << 7) | (b & 0x7F)
    return n


class _VarintValues(dict):
    """Memo from encoded varint to its value; hits stay in C code."""

    def __missing__(self, token):
        value = self[token] = _varint_value(token)
        return value


def _varint(out: bytearray, n: int):
    while n > 0x7F:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    out.append(n)


def encode_snapshot(source: str, items) -> bytes:
    """Encode ``(triple, line)`` pairs of one source."""
    strings: dict = {}

    def idx(text):
        i = strings.get(text)
        if i is None:
            i = strings[text] = len(strings)
        return i

    body = bytearray()
    count = 0
    for triple, line in items:
        s, p, o = triple
        _varint(body, idx(str(s)))
        _varint(body, idx(p.value))
        if isinstance(o, Literal):
            if o.lang is not None:
                body.append(2)
                _varint(body, idx(o.lang))
            elif o.datatype is not None:
                body.append(3)
                _varint(body, idx(o.datatype))
            else:
                body.append(1)
            _varint(body, idx(o.text))
        else:
            body.append(0)
            _varint(body, idx(str(o)))
        _varint(body, line)
        count += 1
    out = bytearray(MAGIC)
    out.append(VERSION)
    name = source.encode("utf-8")
    _varint(out, len(name))
    out += name
    _varint(out, len(strings))
    for text in strings:
        data = text.encode("utf-8")
        _varint(out, len(data))
        out += data
    _varint(out, count)
    out += body
    out += struct.pack("<I", count & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, message):
        raise PersistError(self.path, f"offset {self.pos}", message)

    def byte(self):
        if self.pos >= len(self.data):
            self.fail("unexpected end of snapshot")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def varint(self):
        data, pos = self.data, self.pos
        n = shift = 0
        try:
            while True:
                b = data[pos]
                pos += 1
                n |= (b & 0x7F) << shift
                if b < 0x80:
                    break
                shift += 7
        except IndexError:
            self.fail("unexpected end of snapshot")
        self.pos = pos
        return n

    def string(self):
        n = self.varint()
        end = self.pos + n
        if end > len(self.data):
            self.fail("string runs past end of snapshot")
        try:
            text = self.data[self.pos:end].decode("utf-8")
        except UnicodeDecodeError:
            self.fail("invalid UTF-8 in string table")
        self.pos = end
        return text


def _lang_literal(text, lang):
    if lang and lang == lang.lower():
        return Literal.trusted(text, lang)
    return Literal(text, lang)


def decode_snapshot(data: bytes, path="<snapshot>") -> tuple:
    """Return ``(source, [(triple, line), ...])``."""
    with gc_paused():
        return _decode_snapshot(data, path)


def _decode_snapshot(data: bytes, path) -> tuple:
    r = _Reader(data, path)
    if data[:4] != MAGIC:
        r.fail("bad magic")
    r.pos = 4
    version = r.byte()
    if version != VERSION:
        r.fail(f"unsupported snapshot version {version}")
    source = r.string()
    nstrings = r.varint()
    strings = [r.string() for _ in range(nstrings)]
    terms: dict = {}

    def resource(i):
        term = terms.get(i)
        if term is None:
            term = terms[i] = _resource(strings[i])
        return term

    preds: dict = {}
    count = r.varint()
    if len(data) - r.pos < 4:
        r.fail("missing trailer")
    (trailer,) = struct.unpack_from("<I", data, len(data) - 4)
    if trailer != count & 0xFFFFFFFF:
        r.fail(f"trailer count {trailer} does not match {count}")
    body = data[r.pos:len(data) - 4]
    tokens = _VARINT.findall(body)
    if sum(map(len, tokens)) != len(body):
        r.fail("truncated varint in triple section")
    vals = list(map(_VarintValues().__getitem__, tokens))
    items = []
    i = 0
    trusted = Literal.trusted
    try:
        for n in range(count):
            s = resource(vals[i])
            pi = vals[i + 1]
            p = preds.get(pi)
            if p is None:
                p = preds[pi] = Iri(strings[pi])
            kind = vals[i + 2]
            if kind == 0:
                o = resource(vals[i + 3])
                i += 4
            elif kind == 1:
                o = trusted(strings[vals[i + 3]])
                i += 4
            elif kind == 2:
                o = _lang_literal(strings[vals[i + 4]], strings[vals[i + 3]])
                i += 5
            elif kind == 3:
                o = trusted(strings[vals[i + 4]], None, strings[vals[i + 3]])
                i += 5
            else:
                raise PersistError(path, f"triple {n}", f"bad object tag {kind}")
            items.append((Triple(s, p, o), vals[i]))
            i += 1
    except IndexError:
        raise PersistError(path, f"triple {len(items)}", "index out of range or truncated triple") from None
    if i != len(vals):
        raise PersistError(path, f"triple {count}", "data after the last triple")
    return source, items


# -- journal terms ------------------------------------------------------------------

def _term_text(term) -> str:
    if isinstance(term, Literal):
        text = json.dumps(term.text, ensure_ascii=False)
        if term.lang is not None:
            return f"lang({json.dumps(term.lang)}, {text})"
        if term.datatype is not None:
            return f"type({json.dumps(term.datatype, ensure_ascii=False)}, {text})"
        return f"literal({text})"
    return json.dumps(str(term), ensure_ascii=False)


def format_record(functor: str, *args) -> str:
    parts = []
    for a in args:
        if isinstance(a, (int, float)) and not isinstance(a, bool):
            parts.append(repr(a))
        else:
            parts.append(_term_text(a))
    return f"{functor}({', '.join(parts)}).\n"


_TOKEN = re.compile(r'\s*(?:([a-z_]+)|("(?:[^"\\]|\\.)*")|(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)|([(),.]))')


class _TermParser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def next(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            raise ValueError(f"bad token at column {self.pos + 1}")
        self.pos = m.end()
        return m

    def value(self, m):
        name, string, number, punct = m.groups()
        if string is not None:
            return json.loads(string)
        if number is not None:
            return float(number) if any(c in number for c in ".eE") else int(number)
        if name is not None:
            return self.compound(name)
        raise ValueError(f"unexpected {punct!r}")

    def compound(self, name):
        if self.next().group(4) != "(":
            raise ValueError("expected '('")
        args = []
        while True:
            m = self.next()
            if m.group(4) == ")" and not args:
                break
            args.append(self.value(m))
            sep = self.next().group(4)
            if sep == ")":
                break
            if sep != ",":
                raise ValueError("expected ',' or ')'")
        return (name, args)

    def record(self):
        m = self.next()
        if m.group(1) is None:
            raise ValueError("expected a record functor")
        functor, args = self.compound(m.group(1))
        if self.next().group(4) != "." or self.text[self.pos:].strip():
            raise ValueError("expected '.' at end of record")
        return functor, args


def _object(arg):
    if isinstance(arg, str):
        return _resource(arg)
    name, args = arg
    if name == "literal" and len(args) == 1:
        return Literal(args[0])
    if name == "lang" and len(args) == 2:
        return Literal(args[1], args[0])
    if name == "type" and len(args) == 2:
        return Literal(args[1], datatype=args[0])
    raise ValueError(f"bad object term {name}/{len(args)}")


def _triple(args):
    s, p, o = args
    if not isinstance(s, str) or not isinstance(p, str):
        raise ValueError("subject and predicate must be strings")
    return Triple(_resource(s), Iri(p), _object(o))


def parse_record(line: str) -> tuple:
    """Parse one journal line into ``(functor, values)``."""
    functor, args = _TermParser(line).record()
    if functor == "begin" and len(args) == 2:
        return functor, args
    if functor == "end" and len(args) == 1:
        return functor, args
    if functor == "assert" and len(args) == 4:
        return functor, [_triple(args[:3]), args[3]]
    if functor == "retract" and len(args) == 3:
        return functor, [_triple(args)]
    if functor == "update" and len(args) == 6:
        return functor, [_triple(args[:3]), _triple(args[3:])]
    raise ValueError(f"unknown journal record {functor}/{len(args)}")


def read_journal(path) -> tuple:
    """Return ``(transactions, warnings)``; each transaction is a list of
    parsed records between a begin and its end.  A trailing incomplete
    transaction is dropped with a warning."""
    txns, warnings, _ = _scan_journal(path)
    return txns, warnings


def _scan_journal(path) -> tuple:
    """As :func:`read_journal`, plus the byte length of the prefix holding
    only complete transactions."""
    with open(path, "rb") as f:
        data = f.read()
    lines = data.split(b"\n")
    complete_last = lines[-1] == b""
    if complete_last:
        lines.pop()
    txns: list = []
    warnings: list = []
    current = None
    offset = valid = 0
    for lineno, raw in enumerate(lines, 1):
        last = lineno == len(lines)
        try:
            functor, args = parse_record(raw.decode("utf-8"))
        except (ValueError, json.JSONDecodeError) as exc:
            if last and not complete_last:
                warnings.append(f"{path}:{lineno}: ignoring truncated record")
                break
            raise PersistError(path, f"line {lineno}", str(exc)) from None
        offset += len(raw) + 1
        if functor == "begin":
            if current is not None:
                raise PersistError(path, f"line {lineno}", "nested begin")
            current = (args[0], [])
        elif functor == "end":
            if current is None or current[0] != args[0]:
                raise PersistError(path, f"line {lineno}", "end without matching begin")
            txns.append(current[1])
            current = None
            valid = min(offset, len(data))
        else:
            if current is None:
                raise PersistError(path, f"line {lineno}", f"{functor} outside a transaction")
            current[1].append((functor, args))
    if current is not None:
        warnings.append(f"{path}: ignoring incomplete trailing transaction {current[0]}")
    return txns, warnings, valid


# -- attach / detach -------------------------------------------------------------------

def source_filename(source: str) -> str:
    return quote(source, safe="")


class Persistence:
    """Keeps a directory of snapshot and journal files in sync with a store."""

    def __init__(self, store: Store, fsync: bool = True):
        self.store = store
        self.fsync = fsync
        self.directory: Optional[str] = None
        self.warnings: list = []
        self._sub = None
        self._journals: dict = {}
        self._pending: dict = {}

    @property
    def attached(self) -> bool:
        return self._sub is not None

    def _path(self, source, ext):
        return os.path.join(self.directory, source_filename(source) + ext)

    def attach(self, directory: str) -> None:
        if self.attached:
            raise RuntimeError(f"already attached to {self.directory}")
        os.makedirs(directory, exist_ok=True)
        self.directory = directory
        self.warnings = []
        sources = set()
        for name in os.listdir(directory):
            for ext in (SNAPSHOT_EXT, JOURNAL_EXT):
                if name.endswith(ext):
                    sources.add(unquote(name[: -len(ext)]))
        for source in sorted(sources):
            self._load_source(source)
        for w in self.warnings:
            log.warning("%s", w)
        self._sub = self.store.monitor(self._on_event)

    def _load_source(self, source):
        snap = self._path(source, SNAPSHOT_EXT)
        if os.path.exists(snap):
            with open(snap, "rb") as f:
                data = f.read()
            _, items = decode_snapshot(data, snap)
            self.store.bulk_load(source, items)
        journal = self._path(source, JOURNAL_EXT)
        if os.path.exists(journal):
            txns, warnings, valid = _scan_journal(journal)
            self.warnings.extend(warnings)
            if valid < os.path.getsize(journal):
                # drop the torn tail so new records start on a clean line
                os.truncate(journal, valid)
            for records in txns:
                self._replay(source, records)

    def _replay(self, source, records):
        store = self.store
        with store.transaction():
            for functor, args in records:
                if functor == "assert":
                    t, line = args
                    store.assert_triple(t.subject, t.predicate, t.object, source, line)
                elif functor == "retract":
                    t = args[0]
                    store.retract_triples(t.subject, t.predicate, t.object, source=source)
                else:
                    store.update_triple(args[0], args[1], source=source)

    def _on_event(self, ev: Event):
        if ev.kind == "transaction_begin":
            self._pending[ev.txn] = {}
            return
        if ev.kind == "transaction_end":
            self._flush_txn(ev.txn, self._pending.pop(ev.txn, {}))
            return
        if ev.kind == "assert":
            rec = format_record("assert", *ev.triple, ev.line)
        elif ev.kind == "retract":
            rec = format_record("retract", *ev.triple)
        elif ev.kind == "update":
            rec = format_record("update", *ev.triple, *ev.new)
        else:
            return
        self._pending.setdefault(ev.txn, {}).setdefault(ev.source, []).append(rec)

    def _journal(self, source):
        f = self._journals.get(source)
        if f is None:
            f = self._journals[source] = open(self._path(source, JOURNAL_EXT), "a", encoding="utf-8", newline="\n")
        return f

    def _flush_txn(self, txn_id, by_source):
        stamp = time.time()
        for source, records in by_source.items():
            f = self._journal(source)
            f.write(format_record("begin", txn_id, stamp))
            f.writelines(records)
            f.write(format_record("end", txn_id))
            f.flush()
            if self.fsync:
                os.fsync(f.fileno())

    def save_snapshot(self, source: str) -> None:
        """Write the source's current triples as a snapshot (atomically) and
        empty its journal."""
        if not self.attached:
            raise RuntimeError("not attached")
        with self.store.writes_blocked():
            items = [(r.triple, r.line) for r in self.store.records(source)]
            data = encode_snapshot(source, items)
            path = self._path(source, SNAPSHOT_EXT)
            tmp = path + ".tmp"
            with open(tmp, "wb") as f:
                f.write(data)
                f.flush()
                if self.fsync:
                    os.fsync(f.fileno())
            os.replace(tmp, path)
            old = self._journals.pop(source, None)
            if old is not None:
                old.close()
            with open(self._path(source, JOURNAL_EXT), "w", encoding="utf-8"):
                pass

    def detach(self) -> None:
        if self._sub is None:
            return
        self._sub.cancel()
        self._sub = None
        for f in self._journals.values():
            f.flush()
            f.close()
        self._journals.clear()
        self._pending.clear()


def load_snapshot_file(store: Store, path: str) -> int:
    """Load a snapshot file into *store* in one transaction; returns the
    number of triples read."""
    with open(path, "rb") as f:
        source, items = decode_snapshot(f.read(), path)
    store.bulk_load(source, items)
    return len(items)


def verify_directory(directory: str) -> list:
    """Check every snapshot and journal in *directory*.  Returns report
    lines; raises :class:`PersistError` on the first corrupt file."""
    report = []
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if name.endswith(SNAPSHOT_EXT):
            with open(path, "rb") as f:
                source, items = decode_snapshot(f.read(), path)
            report.append(f"{name}: snapshot of {source!r}, {len(items)} triples")
        elif name.endswith(JOURNAL_EXT):
            txns, warnings = read_journal(path)
            report.append(f"{name}: journal, {len(txns)} transactions")
            report.extend(warnings)
    return report


__all__ = [
    "MAGIC", "VERSION", "PersistError", "Persistence", "encode_snapshot", "decode_snapshot",
    "format_record", "parse_record", "read_journal", "load_snapshot_file", "verify_directory",
    "source_filename",
]
