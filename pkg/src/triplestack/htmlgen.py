"""Declarative HTML generation.

A page is described by nested specs: plain strings are text, :class:`Tag`
is an element and :class:`Rule` embeds a generator whose return value (a
spec or list of specs) is spliced in at that position.  :func:`render`
flattens a spec into a balanced token stream; :func:`tokens_to_text` prints
it with all quoting applied, so the output is always well formed::

    def affiliations(pairs):
        return [el("tr", el("td", name), el("td", aff)) for name, aff in pairs]

    page = el("table", {"class": "aff"},
              el("tr", el("th", "Name"), el("th", "Affiliation")),
              Rule(affiliations, pairs))
    text = to_html(page)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

from .markup import is_valid_name, quote_attribute, quote_text

__all__ = [
    "Tag", "Rule", "el", "Open", "Close", "TextToken",
    "HtmlError", "RenderError", "render", "tokens_to_text", "to_html", "VOID_ELEMENTS",
]

VOID_ELEMENTS = frozenset({"br", "img", "hr", "input", "meta", "link", "col", "area", "base"})


class HtmlError(ValueError):
    """Structurally invalid spec or token stream."""


class RenderError(HtmlError):
    def __init__(self, path, cause):
        self.path = path
        self.cause = cause
        super().__init__(f"rule failed at {'/'.join(path)}: {cause!r}")


@dataclass
class Tag:
    name: str
    attributes: dict = field(default_factory=dict)
    body: list = field(default_factory=list)


@dataclass
class Rule:
    generator: Callable
    args: tuple = ()

    def __init__(self, generator, *args):
        self.generator = generator
        self.args = args


def el(name: str, /, *body, **attrs) -> Tag:
    """Shorthand for :class:`Tag`.  A leading ``dict`` in *body* supplies
    attributes; keyword names have a trailing underscore stripped (``class_``)."""
    attributes = {}
    if body and isinstance(body[0], dict):
        attributes.update(body[0])
        body = body[1:]
    for key, value in attrs.items():
        attributes[key.rstrip("_")] = value
    return Tag(name, attributes, list(body))


class Open(NamedTuple):
    tag: str
    attributes: tuple = ()


class Close(NamedTuple):
    tag: str


class TextToken(NamedTuple):
    text: str


def _scalar(value: Any) -> str:
    if isinstance(value, bool):
        raise HtmlError(f"attribute value must be text or a number, not {value!r}")
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    raise HtmlError(f"attribute value must be text or a number, not {value!r}")


def _render(spec, out, path):
    if spec is None:
        return
    if isinstance(spec, str):
        out.append(TextToken(spec))
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        out.append(TextToken(_scalar(spec)))
    elif isinstance(spec, (list, tuple)):
        for item in spec:
            _render(item, out, path)
    elif isinstance(spec, Tag):
        name = spec.name
        if not is_valid_name(name):
            raise HtmlError(f"invalid tag name {name!r}")
        attrs = []
        for key, value in spec.attributes.items():
            if not is_valid_name(key):
                raise HtmlError(f"invalid attribute name {key!r} on <{name}>")
            attrs.append((key, _scalar(value)))
        if name in VOID_ELEMENTS and spec.body:
            raise HtmlError(f"void element <{name}> cannot have content")
        out.append(Open(name, tuple(attrs)))
        _render(spec.body, out, path + [name])
        out.append(Close(name))
    elif isinstance(spec, Rule):
        here = path + ["\\" + getattr(spec.generator, "__name__", "rule")]
        try:
            produced = spec.generator(*spec.args)
        except RenderError:
            raise
        except Exception as exc:
            raise RenderError(here, exc) from exc
        _render(produced, out, here)
    else:
        raise HtmlError(f"cannot render {spec!r}")


def render(spec) -> list:
    """Flatten *spec* into a list of :class:`Open`, :class:`Close` and
    :class:`TextToken` tokens."""
    out: list = []
    _render(spec, out, [])
    return out


def tokens_to_text(tokens) -> str:
    out = []
    stack = []
    tokens = list(tokens)
    for i, tok in enumerate(tokens):
        if isinstance(tok, Open):
            attrs = "".join(f' {k}="{quote_attribute(v)}"' for k, v in tok.attributes)
            if tok.tag in VOID_ELEMENTS:
                nxt = tokens[i + 1] if i + 1 < len(tokens) else None
                if nxt != Close(tok.tag):
                    raise HtmlError(f"void element <{tok.tag}> must be closed immediately")
                out.append(f"<{tok.tag}{attrs}/>")
            else:
                out.append(f"<{tok.tag}{attrs}>")
            stack.append(tok.tag)
        elif isinstance(tok, Close):
            if not stack or stack[-1] != tok.tag:
                raise HtmlError(f"unbalanced close token for <{tok.tag}>")
            stack.pop()
            if tok.tag not in VOID_ELEMENTS:
                out.append(f"</{tok.tag}>")
        elif isinstance(tok, TextToken):
            out.append(quote_text(tok.text))
        else:
            raise HtmlError(f"unknown token {tok!r}")
    if stack:
        raise HtmlError(f"unclosed element <{stack[-1]}>")
    return "".join(out)


def to_html(spec) -> str:
    return tokens_to_text(render(spec))
