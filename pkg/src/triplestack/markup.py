"""Markup parsing and serialization.

Documents are represented as lists of nodes.  An element is an
:class:`Element` holding a tag, a ``dict`` of attributes and a list of
children; character data is :class:`Text`, processing instructions are
:class:`ProcInstr`.  Attribute values are plain ``str``, or ``int``/``float``
when numeric conversion is enabled, or a ``list`` for declared multi-valued
attributes.

Two parse modes exist.  ``xml`` is strict.  ``html`` accepts a small HTML
subset and canonicalizes it: omitted end tags are closed, ``tbody`` is
inserted between ``table`` and ``tr`` and ``td``/``th`` receive their
default ``rowspan``/``colspan`` attributes, so sources that differ only in
omissions produce equal trees.

Input is read incrementally, so :func:`parse_events` runs in memory bounded
by the largest subtree a handler asks for.
"""

from __future__ import annotations

import codecs
import io
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

__all__ = [
    "Element",
    "Text",
    "ProcInstr",
    "ParseOptions",
    "MarkupError",
    "EventParser",
    "parse_tree",
    "parse_events",
    "serialize",
    "quote_text",
    "quote_attribute",
    "is_valid_name",
]

AttrValue = Union[str, int, float, list]


@dataclass
class Element:
    tag: str
    attributes: dict = field(default_factory=dict)
    children: list = field(default_factory=list)


@dataclass
class Text:
    content: str


@dataclass
class ProcInstr:
    content: str


Node = Union[Element, Text, ProcInstr]


@dataclass
class ParseOptions:
    mode: str = "xml"
    convert_numbers: bool = False
    source_name: str = "<input>"
    multi_valued: frozenset = frozenset()
    strip_space: bool = False

    def __post_init__(self):
        if self.mode not in ("xml", "html"):
            raise ValueError(f"unknown parse mode {self.mode!r}")


class MarkupError(ValueError):
    """Malformed input; carries the line number where it was detected."""

    def __init__(self, message, line=None, source=None):
        self.message = message
        self.line = line
        self.source = source
        where = ""
        if source is not None or line is not None:
            where = f"{source or '<input>'}:{line}: "
        super().__init__(where + message)


# -- scanning -----------------------------------------------------------------

_CHUNK = 1 << 16

_TEXT = re.compile(r"[^<]+")
_COMMENT = re.compile(r"<!--(.*?)-->", re.S)
_CDATA = re.compile(r"<!\[CDATA\[(.*?)\]\]>", re.S)
_PI = re.compile(r"<\?(.*?)\?>", re.S)
_DOCTYPE = re.compile(r"<!DOCTYPE[^>\[]*(?:\[.*?\])?\s*>", re.S | re.I)
_START = re.compile(
    r"<([^\s/>!?<=\"']+)"
    r"((?:\s+[^\s=/>\"']+(?:\s*=\s*(?:\"[^\"]*\"|'[^']*'|[^\s\"'=<>`]+))?)*)"
    r"\s*(/?)>"
)
_END = re.compile(r"</([^\s>]+)\s*>")
_ATTR = re.compile(
    r"\s*([^\s=/>\"']+)(?:\s*=\s*(?:\"([^\"]*)\"|'([^']*)'|([^\s\"'=<>`]+)))?"
)
_ENTITY = re.compile(r"&(#[0-9]+;|#x[0-9a-fA-F]+;|amp;|lt;|gt;|quot;|apos;)?")
_NAME = re.compile(r"[^\W\d][\w.\-:]*\Z")

_BUILTIN = {"amp;": "&", "lt;": "<", "gt;": ">", "quot;": '"', "apos;": "'"}


def is_valid_name(name: str) -> bool:
    return bool(name) and _NAME.match(name) is not None


def _decode_entities(text, strict, line, source):
    if "&" not in text:
        return text

    def repl(m):
        ref = m.group(1)
        if ref is None:
            if strict:
                raise MarkupError("bad entity reference", line + text.count("\n", 0, m.start()), source)
            return "&"
        if ref[0] == "#":
            code = int(ref[2:-1], 16) if ref[1] == "x" else int(ref[1:-1])
            if code > 0x10FFFF:
                raise MarkupError(f"character reference out of range: &{ref}",
                                  line + text.count("\n", 0, m.start()), source)
            return chr(code)
        return _BUILTIN[ref]

    return _ENTITY.sub(repl, text)


class _Scanner:
    """Incremental tokenizer over a character or byte stream."""

    def __init__(self, source, source_name):
        self.source_name = source_name
        self._decoder = None
        if isinstance(source, str):
            source = io.StringIO(source)
        elif isinstance(source, (bytes, bytearray)):
            source = io.BytesIO(bytes(source))
        self._stream = source
        self._buf = ""
        self._pos = 0
        self._eof = False
        self._first = True
        self.line = 1

    def _fill(self):
        data = self._stream.read(_CHUNK)
        if isinstance(data, (bytes, bytearray)):
            if self._decoder is None:
                self._decoder = codecs.getincrementaldecoder("utf-8")()
            final = not data
            try:
                data = self._decoder.decode(data, final)
            except UnicodeDecodeError as exc:
                raise MarkupError(f"bad encoding: {exc.reason}", self.line, self.source_name)
            if final:
                self._eof = True
        elif not data:
            self._eof = True
        if self._first and data:
            self._first = False
            if data[0] == "\ufeff":
                data = data[1:]
        if self._pos > _CHUNK:
            self._buf = self._buf[self._pos:]
            self._pos = 0
        self._buf += data

    def _advance(self, end):
        self.line += self._buf.count("\n", self._pos, end)
        self._pos = end

    def tokens(self):
        """Yield ``(kind, line, *payload)`` tuples until end of input."""
        while True:
            if self._pos >= len(self._buf):
                if self._eof:
                    return
                self._fill()
                continue
            buf, pos = self._buf, self._pos
            line = self.line
            if buf[pos] != "<":
                m = _TEXT.match(buf, pos)
                if m.end() == len(buf) and not self._eof:
                    self._fill()
                    continue
                self._advance(m.end())
                yield ("text", line, m.group())
                continue
            tok = self._markup(buf, pos)
            if tok is None:
                if not self._eof and len(buf) - pos < 16 * _CHUNK:
                    self._fill()
                    continue
                raise MarkupError("malformed markup", line, self.source_name)
            if tok:
                yield tok

    def _markup(self, buf, pos):
        line = self.line
        nxt = buf[pos + 1:pos + 2]
        if nxt == "/":
            m = _END.match(buf, pos)
            if m:
                self._advance(m.end())
                return ("end", line, m.group(1))
            return None
        if nxt == "?":
            m = _PI.match(buf, pos)
            if m:
                self._advance(m.end())
                content = m.group(1)
                if content[:3].lower() == "xml" and (len(content) == 3 or content[3].isspace()):
                    return ()
                return ("pi", line, content)
            return None
        if nxt == "!":
            for rx, kind in ((_COMMENT, None), (_CDATA, "cdata"), (_DOCTYPE, None)):
                m = rx.match(buf, pos)
                if m:
                    self._advance(m.end())
                    return ("cdata", line, m.group(1)) if kind else ()
            return None
        m = _START.match(buf, pos)
        if m:
            self._advance(m.end())
            return ("start", line, m.group(1), m.group(2), bool(m.group(3)))
        return None


# -- HTML subset canonicalization tables ---------------------------------------

_VOID = frozenset({"br", "img", "hr", "input", "meta", "link", "col", "area", "base"})
_BLOCK = frozenset({
    "p", "div", "table", "ul", "ol", "dl", "pre", "blockquote", "form", "hr",
    "h1", "h2", "h3", "h4", "h5", "h6", "address", "center",
})
_SECTIONS = frozenset({"tbody", "thead", "tfoot"})
_CELL_DEFAULTS = (("rowspan", "1"), ("colspan", "1"))
# whitespace-only text is not content inside these
_ELEMENT_ONLY = frozenset({"table", "tbody", "thead", "tfoot", "tr", "ul", "ol", "dl", "html", "head"})


def _open_above(stack, targets, boundary):
    """Index of the innermost open element in *targets* that lies above the
    innermost *boundary* element, or -1."""
    for i in range(len(stack) - 1, -1, -1):
        tag = stack[i]
        if tag in targets:
            return i
        if tag in boundary:
            return -1
    return -1


def _implied_closes(stack, tag):
    """Number of elements to pop before opening *tag* (html mode)."""
    if tag in ("td", "th"):
        i = _open_above(stack, {"td", "th"}, {"tr", "table"})
    elif tag == "tr":
        i = _open_above(stack, {"tr"}, {"table"} | _SECTIONS)
        if i < 0:
            i = _open_above(stack, {"td", "th"}, {"table"} | _SECTIONS)
    elif tag in _SECTIONS:
        i = _open_above(stack, _SECTIONS, {"table"})
    elif tag == "li":
        i = _open_above(stack, {"li"}, {"ul", "ol"})
    else:
        i = -1
    if i >= 0:
        return len(stack) - i
    if tag in _BLOCK and stack and stack[-1] == "p":
        return 1
    return 0


# -- event layer ----------------------------------------------------------------

def _convert(name, value, opts):
    if opts.mode == "html" and name in opts.multi_valued:
        items = value.split()
        return [_to_number(v) if opts.convert_numbers else v for v in items]
    if opts.convert_numbers:
        return _to_number(value)
    return value


_INT = re.compile(r"[+-]?\d+\Z")
_FLOAT = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?\Z")


def _to_number(text):
    # Only lossless conversions: the number must print back as the same text.
    if _INT.match(text):
        num = int(text)
    elif _FLOAT.match(text):
        num = float(text)
    else:
        return text
    return num if _number_text(num) == text else text


def _number_text(num):
    return repr(num) if isinstance(num, float) else str(num)


def _parse_attributes(raw, opts, line, html):
    attrs = {}
    if not raw:
        return attrs
    for m in _ATTR.finditer(raw):
        name, dq, sq, bare = m.groups()
        if html:
            name = name.lower()
        if dq is not None:
            value = dq
        elif sq is not None:
            value = sq
        elif not html:
            raise MarkupError(f"attribute {name!r} needs a quoted value", line, opts.source_name)
        else:
            value = bare if bare is not None else name
        if name in attrs:
            if html:
                continue
            raise MarkupError(f"duplicate attribute {name!r}", line, opts.source_name)
        value = _decode_entities(value, not html, line, opts.source_name)
        attrs[name] = _convert(name, value, opts)
    return attrs


def _events(source, opts: ParseOptions) -> Iterator[tuple]:
    """Yield normalized events: ``("begin", tag, attrs, line)``,
    ``("end", tag, line)``, ``("text", content, line)``, ``("pi", content, line)``.

    Adjacent character data is merged; html canonicalization happens here so
    the tree and event interfaces agree by construction.
    """
    html = opts.mode == "html"
    src = opts.source_name
    scanner = _Scanner(source, src)
    stack: list = []
    pending: list = []
    pending_line = 0
    seen_root = False

    def flush():
        if not pending:
            return None
        text = "".join(pending)
        pending.clear()
        if text.isspace() or not text:
            if not stack or opts.strip_space or (html and stack[-1] in _ELEMENT_ONLY):
                return None
        elif not stack and not html:
            raise MarkupError("character data outside the document element", pending_line, src)
        return ("text", text, pending_line)

    for tok in scanner.tokens():
        kind, line = tok[0], tok[1]
        if kind == "text" or kind == "cdata":
            if not pending:
                pending_line = line
            if kind == "text":
                if not html and "<" in tok[2]:
                    raise MarkupError("stray '<'", line, src)
                pending.append(_decode_entities(tok[2], not html, line, src))
            else:
                pending.append(tok[2])
            continue
        ev = flush()
        if ev:
            yield ev
        if kind == "pi":
            yield ("pi", tok[2], line)
        elif kind == "start":
            tag, raw, empty = tok[2], tok[3], tok[4]
            if html:
                tag = tag.lower()
            elif not is_valid_name(tag):
                raise MarkupError(f"invalid element name {tag!r}", line, src)
            if not html and not stack and seen_root:
                raise MarkupError("more than one document element", line, src)
            attrs = _parse_attributes(raw, opts, line, html)
            if html:
                for _ in range(_implied_closes(stack, tag)):
                    yield ("end", stack.pop(), line)
                if tag == "tr" and stack and stack[-1] == "table":
                    stack.append("tbody")
                    yield ("begin", "tbody", {}, line)
                if tag in ("td", "th"):
                    for name, value in _CELL_DEFAULTS:
                        attrs.setdefault(name, _convert(name, value, opts))
                if tag in _VOID:
                    empty = True
            seen_root = True
            yield ("begin", tag, attrs, line)
            if empty:
                yield ("end", tag, line)
            else:
                stack.append(tag)
        elif kind == "end":
            tag = tok[2].lower() if html else tok[2]
            if html:
                if tag in stack:
                    while stack:
                        top = stack.pop()
                        yield ("end", top, line)
                        if top == tag:
                            break
                continue
            if not stack or stack[-1] != tag:
                expected = stack[-1] if stack else None
                raise MarkupError(
                    f"unbalanced end tag </{tag}> (expected </{expected}>)"
                    if expected else f"unexpected end tag </{tag}>",
                    line, src)
            stack.pop()
            yield ("end", tag, line)
    ev = flush()
    if ev:
        yield ev
    if stack:
        if not html:
            raise MarkupError(f"unclosed element <{stack[-1]}>", scanner.line, src)
        while stack:
            yield ("end", stack.pop(), scanner.line)


def _build(events, first=None):
    """Build nodes from *events*.  With *first* (a begin event already
    consumed), return the single element it opens."""
    root: list = []
    stack: list = []
    if first is not None:
        stack.append(Element(first[1], first[2], []))
    for ev in events:
        kind = ev[0]
        if kind == "begin":
            stack.append(Element(ev[1], ev[2], []))
            continue
        if kind == "end":
            node = stack.pop()
            if not stack:
                if first is not None:
                    return node
                root.append(node)
            else:
                stack[-1].children.append(node)
            continue
        node = Text(ev[1]) if kind == "text" else ProcInstr(ev[1])
        (stack[-1].children if stack else root).append(node)
    return root


def parse_tree(source, opts: Optional[ParseOptions] = None, **kw) -> list:
    """Parse *source* (text, bytes or a readable stream) into a node list."""
    if opts is None:
        opts = ParseOptions(**kw)
    return _build(_events(source, opts))


class EventParser:
    """Handed to event callbacks.

    ``line`` is the line of the current event.  Inside ``on_begin`` a handler
    may call :meth:`read_element` to receive the whole element being opened;
    no nested events are delivered for it.
    """

    def __init__(self, events, opts):
        self._events = events
        self.opts = opts
        self.source_name = opts.source_name
        self.line = 0
        self._current = None

    def read_element(self) -> Element:
        if self._current is None:
            raise RuntimeError("read_element() is only valid inside on_begin")
        first, self._current = self._current, None
        return _build(self._events, first)


def parse_events(
    source,
    opts: Optional[ParseOptions] = None,
    *,
    on_begin: Optional[Callable] = None,
    on_end: Optional[Callable] = None,
    on_text: Optional[Callable] = None,
    on_pi: Optional[Callable] = None,
) -> None:
    """Stream *source*, calling ``on_begin(tag, attrs, parser)``,
    ``on_end(tag, parser)``, ``on_text(text, parser)`` and
    ``on_pi(text, parser)`` in document order."""
    opts = opts or ParseOptions()
    events = _events(source, opts)
    parser = EventParser(events, opts)
    for ev in events:
        kind = ev[0]
        parser.line = ev[-1]
        if kind == "begin":
            if on_begin is not None:
                parser._current = ev
                try:
                    on_begin(ev[1], ev[2], parser)
                finally:
                    parser._current = None
        elif kind == "end":
            if on_end is not None:
                on_end(ev[1], parser)
        elif kind == "text":
            if on_text is not None:
                on_text(ev[1], parser)
        elif on_pi is not None:
            on_pi(ev[1], parser)


# -- serialization -----------------------------------------------------------------

_TEXT_ESC = re.compile(r"[&<>\r\x00-\x08\x0b\x0c\x0e-\x1f]")
_ATTR_ESC = re.compile(r"[&<>\"\t\n\r\x00-\x08\x0b\x0c\x0e-\x1f]")
_NAMED = {"&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;"}


def _esc(m):
    c = m.group()
    return _NAMED.get(c) or f"&#{ord(c)};"


def quote_text(text: str) -> str:
    """Escape *text* for use as element content."""
    return _TEXT_ESC.sub(_esc, text)


def quote_attribute(text: str) -> str:
    """Escape *text* for use inside a quoted attribute value (either quote
    character)."""
    return _ATTR_ESC.sub(_esc, text).replace("'", "&#39;")


def _attr_text(value) -> str:
    if isinstance(value, list):
        return " ".join(_attr_text(v) for v in value)
    if isinstance(value, bool):
        raise TypeError("boolean attribute values are not supported")
    if isinstance(value, (int, float)):
        return _number_text(value)
    return str(value)


def _check_name(name, what):
    if not is_valid_name(name):
        raise MarkupError(f"invalid {what} name {name!r}")


def _write_start(out, node):
    _check_name(node.tag, "element")
    out.append("<" + node.tag)
    for name, value in node.attributes.items():
        _check_name(name, "attribute")
        out.append(f' {name}="{quote_attribute(_attr_text(value))}"')


def _write(out, node, indent, depth):
    if isinstance(node, Text):
        out.append(quote_text(node.content))
    elif isinstance(node, ProcInstr):
        if "?>" in node.content:
            raise MarkupError("processing instruction may not contain '?>'")
        out.append(f"<?{node.content}?>")
    else:
        _write_start(out, node)
        if not node.children:
            out.append("/>")
            return
        out.append(">")
        layout = indent is not None and not any(isinstance(c, Text) for c in node.children)
        for child in node.children:
            if layout:
                out.append("\n" + indent * (depth + 1))
            _write(out, child, indent, depth + 1)
        if layout:
            out.append("\n" + indent * depth)
        out.append(f"</{node.tag}>")


def serialize(nodes, layout: str = "compact") -> str:
    """Serialize a node or node list as XML text."""
    if isinstance(nodes, (Element, Text, ProcInstr)):
        nodes = [nodes]
    if layout not in ("compact", "indented"):
        raise ValueError(f"unknown layout {layout!r}")
    indent = "  " if layout == "indented" else None
    out: list = []
    for i, node in enumerate(nodes):
        if indent is not None and i:
            out.append("\n")
        _write(out, node, indent, 0)
    return "".join(out)
