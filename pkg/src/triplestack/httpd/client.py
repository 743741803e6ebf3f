"""HTTP client: open a URL following redirects, or fetch and parse a
document through a content-type handler."""

from __future__ import annotations

import http.client
import io
import socket
from typing import Callable, Optional
from urllib.parse import urljoin, urlsplit

from .. import markup

REDIRECTS = (301, 302, 303, 307, 308)


class HttpError(Exception):
    pass


class HttpStatusError(HttpError):
    def __init__(self, status: int, url: str, reason: str = "", body: bytes = b""):
        self.status = status
        self.url = url
        self.reason = reason
        self.body = body
        super().__init__(f"{status} {reason} for {url}")


class HttpTimeout(HttpError, TimeoutError):
    pass


class TooManyRedirects(HttpError):
    pass


class UnsupportedMediaType(HttpError):
    def __init__(self, content_type: str):
        self.content_type = content_type
        super().__init__(f"no handler for content type {content_type!r}")


class Response:
    def __init__(self, url, status, reason, headers, raw, conn):
        self.url = url
        self.status = status
        self.reason = reason
        self.headers = headers
        self.stream = raw
        self._conn = conn

    @property
    def content_type(self) -> str:
        return (self.headers.get("content-type") or "").split(";")[0].strip().lower()

    @property
    def charset(self) -> str:
        for part in (self.headers.get("content-type") or "").split(";")[1:]:
            key, _, value = part.strip().partition("=")
            if key.lower() == "charset":
                return value.strip('"')
        return "utf-8"

    def read(self, n: Optional[int] = None) -> bytes:
        if n is None or n < 0:
            return self.stream.read()
        return self.stream.read(n)

    def close(self):
        self.stream.close()
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def http_open(url: str, timeout: float = 30.0, max_redirects: int = 10,
              headers: Optional[dict] = None, method: str = "GET",
              body: Optional[bytes] = None) -> Response:
    """Open *url* and return the 2xx response.  The caller closes it."""
    seen = 0
    while True:
        parts = urlsplit(url)
        if parts.scheme != "http" or not parts.hostname:
            raise HttpError(f"not an absolute http URL: {url!r}")
        conn = http.client.HTTPConnection(parts.hostname, parts.port or 80, timeout=timeout)
        target = parts.path or "/"
        if parts.query:
            target += "?" + parts.query
        try:
            conn.request(method, target, body=body, headers=headers or {})
            resp = conn.getresponse()
        except socket.timeout as exc:
            conn.close()
            raise HttpTimeout(f"timed out fetching {url}") from exc
        except OSError:
            conn.close()
            raise
        if resp.status in REDIRECTS and resp.getheader("location"):
            location = urljoin(url, resp.getheader("location"))
            resp.read()
            conn.close()
            seen += 1
            if seen > max_redirects:
                raise TooManyRedirects(f"more than {max_redirects} redirects from {url}")
            if resp.status == 303 or (resp.status in (301, 302) and method == "POST"):
                method, body = "GET", None
            url = location
            continue
        if not 200 <= resp.status < 300:
            data = resp.read()
            conn.close()
            raise HttpStatusError(resp.status, url, resp.reason, data)
        return Response(url, resp.status, resp.reason, resp.headers, resp, conn)


def _text(resp: Response):
    return io.TextIOWrapper(resp.stream, encoding=resp.charset).read()


def _xml(resp: Response):
    return markup.parse_tree(resp.stream, mode="xml", source_name=resp.url)


def _html(resp: Response):
    return markup.parse_tree(resp.stream, mode="html", source_name=resp.url)


DEFAULT_HANDLERS: dict = {
    "text/*": _text,
    "application/xml": _xml,
    "text/xml": _xml,
    "application/rdf+xml": _xml,
    "text/html": _html,
}


def _handler_for(ctype: str, handlers: dict) -> Callable:
    if ctype in handlers:
        return handlers[ctype]
    wildcard = ctype.split("/")[0] + "/*"
    if wildcard in handlers:
        return handlers[wildcard]
    if "*/*" in handlers:
        return handlers["*/*"]
    raise UnsupportedMediaType(ctype)


def _merged(handlers: Optional[dict]) -> dict:
    out = dict(DEFAULT_HANDLERS)
    out.update(handlers or {})
    return out


def http_get(url: str, handlers: Optional[dict] = None, **options):
    """Fetch *url* and return the value produced by the handler registered
    for its content type.  Handlers receive the open :class:`Response`."""
    table = _merged(handlers)
    with http_open(url, **options) as resp:
        return _handler_for(resp.content_type, table)(resp)


def http_post(url: str, body, content_type: str, handlers: Optional[dict] = None, **options):
    if isinstance(body, str):
        body = body.encode("utf-8")
    headers = dict(options.pop("headers", None) or {})
    headers["Content-Type"] = content_type
    table = _merged(handlers)
    with http_open(url, method="POST", body=body, headers=headers, **options) as resp:
        return _handler_for(resp.content_type, table)(resp)
