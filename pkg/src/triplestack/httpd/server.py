"""HTTP/1.1 server with a fixed worker pool and CGI-style handlers.

A handler is called as ``handler(request, out)``.  It writes header lines,
a blank line and then the document to *out*::

    def reply(request, out):
        out.write("Content-type: text/plain\\n\\nok")

The framework adds the status line, framing and connection headers.  A
``Status:`` header line sets the status code.  Returning ``False`` means the
handler failed and produces a 404 reply; raising a
:class:`~triplestack.httpd.errors.ReplyCondition` produces its status;
any other exception produces a 500 reply.
"""

from __future__ import annotations

import io
import logging
import queue
import re
import socket
import threading
from http import HTTPStatus
from typing import Callable, Optional
from urllib.parse import parse_qs, unquote

from ..htmlgen import el, to_html
from .errors import NotFound, ReplyCondition, ServerError
from .session import SessionManager

log = logging.getLogger(__name__)

BUFFER_LIMIT = 64 * 1024
MAX_LINE = 8192
MAX_HEADERS = 100
DEFAULT_MAX_BODY = 256 * 1024 * 1024
_METHOD = re.compile(r"[A-Z]+\Z")


class _Malformed(Exception):
    """The request cannot be parsed; answer 400 and drop the connection."""

    def __init__(self, message, status=400):
        self.status = status
        super().__init__(message)


class Headers:
    """Ordered, case-insensitive header list."""

    def __init__(self, items=()):
        self._items = list(items)

    def get(self, name: str, default=None):
        name = name.lower()
        for key, value in self._items:
            if key.lower() == name:
                return value
        return default

    def get_all(self, name: str) -> list:
        name = name.lower()
        return [v for k, v in self._items if k.lower() == name]

    def __contains__(self, name):
        return self.get(name) is not None

    def __getitem__(self, name):
        value = self.get(name)
        if value is None:
            raise KeyError(name)
        return value

    def items(self):
        return list(self._items)

    def add(self, name, value):
        self._items.append((name, value))

    def __len__(self):
        return len(self._items)

    def __repr__(self):
        return f"Headers({self._items!r})"


class Request:
    def __init__(self, method, target, version, headers: Headers, body: bytes, peer, server=None):
        self.method = method
        self.target = target
        path, _, query = target.partition("?")
        self.path = unquote(path)
        self.query_string = query
        self.version = version
        self.headers = headers
        self.body = body
        self.peer = peer
        self.server = server
        self.new_session = None
        self._session = None
        self.parameters = parse_qs(query, keep_blank_values=True)
        ctype = (headers.get("content-type") or "").split(";")[0].strip().lower()
        if method == "POST" and ctype == "application/x-www-form-urlencoded":
            form = parse_qs(body.decode("utf-8", "replace"), keep_blank_values=True)
            for key, values in form.items():
                self.parameters.setdefault(key, []).extend(values)

    @property
    def stream(self):
        return io.BytesIO(self.body)

    @property
    def content_type(self) -> str:
        return self.headers.get("content-type", "")

    def text(self) -> str:
        charset = "utf-8"
        m = re.search(r"charset=([\w\-]+)", self.content_type, re.I)
        if m:
            charset = m.group(1)
        return self.body.decode(charset, "replace")

    def param(self, name: str, default=None):
        values = self.parameters.get(name)
        return values[0] if values else default

    @property
    def session(self):
        return session_of(self)

    @property
    def wants_keep_alive(self) -> bool:
        conn = (self.headers.get("connection") or "").lower()
        if self.version == "HTTP/1.0":
            return "keep-alive" in conn
        return "close" not in conn


def session_of(request: Request, manager: Optional[SessionManager] = None):
    """The session bound to *request*; issues a new one (and a cookie) when
    the request carries no valid session id."""
    if request._session is not None:
        return request._session
    manager = manager or (request.server.sessions if request.server else None)
    if manager is None:
        raise RuntimeError("sessions are not enabled on this server")
    session, new = manager.lookup(request.headers.get("cookie"))
    request._session = session
    if new:
        request.new_session = (manager, session)
    return session


class CgiOutput:
    """Collects handler output; sends it with Content-Length when it stays
    below the buffer limit and switches to chunked transfer otherwise."""

    def __init__(self, conn, request: Request, keep_alive: bool, limit: int = BUFFER_LIMIT):
        self._conn = conn
        self._request = request
        self.keep_alive = keep_alive
        self._limit = limit
        self._head = bytearray()
        self._body = bytearray()
        self._headers = None
        self.status = 200
        self.committed = False
        self._chunked = False

    def write(self, data) -> None:
        if isinstance(data, str):
            data = data.encode("utf-8")
        if self._headers is None:
            self._head += data
            m = re.search(rb"\r?\n\r?\n", self._head)
            if m is None:
                if len(self._head) > MAX_LINE * MAX_HEADERS:
                    raise ServerError("handler header block too large")
                return
            head, rest = bytes(self._head[:m.start()]), bytes(self._head[m.end():])
            self._parse_head(head)
            data = rest
        if self._chunked:
            if data:
                self._conn.sendall(b"%x\r\n%s\r\n" % (len(data), data))
            return
        self._body += data
        if len(self._body) > self._limit:
            self._start_chunked()

    def print(self, *parts, sep=" ", end="\n") -> None:
        self.write(sep.join(str(p) for p in parts) + end)

    def _parse_head(self, head: bytes):
        headers = []
        for line in head.decode("latin-1").splitlines():
            if not line.strip():
                continue
            name, sep, value = line.partition(":")
            if not sep:
                raise ServerError(f"malformed handler header line {line!r}")
            name, value = name.strip(), value.strip()
            low = name.lower()
            if low == "status":
                try:
                    self.status = int(value.split()[0])
                except (ValueError, IndexError):
                    raise ServerError(f"malformed Status header {value!r}") from None
            elif low in ("content-length", "transfer-encoding", "connection"):
                continue
            else:
                headers.append((name, value))
        if self.status == 200 and any(n.lower() == "location" for n, _ in headers):
            self.status = 302
        self._headers = headers

    def _start_chunked(self):
        if self._request.version == "HTTP/1.0":
            self.keep_alive = False
            self._send_head(None)
            self._conn.sendall(bytes(self._body))
        else:
            self._send_head("chunked")
            self._conn.sendall(b"%x\r\n%s\r\n" % (len(self._body), bytes(self._body)))
        self._body = bytearray()
        self._chunked = True

    def _send_head(self, framing):
        self.committed = True
        self._conn.sendall(_head_bytes(self._request, self.status, self._headers, self.keep_alive, framing))

    def finish(self) -> None:
        if self._headers is None:
            if not self._head.strip():
                raise ServerError("handler produced no output")
            raise ServerError("handler output lacks the blank line ending its header")
        if self.committed:
            if self._chunked and self._request.version != "HTTP/1.0":
                self._conn.sendall(b"0\r\n\r\n")
            return
        body = b"" if self._request.method == "HEAD" else bytes(self._body)
        self.committed = True
        self._conn.sendall(_head_bytes(self._request, self.status, self._headers, self.keep_alive,
                                       len(self._body)) + body)


def _reason(status: int) -> str:
    try:
        return HTTPStatus(status).phrase
    except ValueError:
        return "Unknown"


def _head_bytes(request: Optional[Request], status, headers, keep_alive, framing) -> bytes:
    version = "HTTP/1.1"
    lines = [f"{version} {status} {_reason(status)}"]
    if not any(n.lower() == "content-type" for n, _ in headers):
        lines.append("Content-Type: text/plain; charset=UTF-8")
    for name, value in headers:
        lines.append(f"{name}: {value}")
    if request is not None and request.new_session is not None:
        manager, session = request.new_session
        lines.append(f"Set-Cookie: {manager.set_cookie(session)}")
    if framing == "chunked":
        lines.append("Transfer-Encoding: chunked")
    elif framing is not None:
        lines.append(f"Content-Length: {framing}")
    lines.append("Connection: " + ("keep-alive" if keep_alive else "close"))
    return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1")


def error_page(status: int, message: str) -> str:
    title = f"{status} {_reason(status)}"
    return to_html(el("html",
                      el("head", el("title", title)),
                      el("body", el("h1", _reason(status)), el("p", message))))


def _send_error(conn, request, status, message, keep_alive, extra=()):
    body = error_page(status, message).encode("utf-8")
    headers = [("Content-Type", "text/html; charset=UTF-8"), *extra]
    payload = b"" if request is not None and request.method == "HEAD" else body
    conn.sendall(_head_bytes(request, status, headers, keep_alive, len(body)) + payload)


class Server:
    def __init__(self, handler: Callable, port: int = 0, host: str = "127.0.0.1", workers: int = 4,
                 keep_alive: bool = True, timeout: float = 30.0,
                 sessions: Optional[SessionManager] = None, backlog: int = 64,
                 max_body: int = DEFAULT_MAX_BODY):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self.handler = handler
        self.host = host
        self.requested_port = port
        self.workers = workers
        self.keep_alive = keep_alive
        self.timeout = timeout
        self.sessions = sessions
        self.max_body = max_body
        self._queue: queue.Queue = queue.Queue(maxsize=backlog)
        self._threads: list = []
        self._acceptor = None
        self._listener = None
        self._stopping = threading.Event()
        self._active: set = set()
        self._active_lock = threading.Lock()
        self.requests_served = 0
        self._count_lock = threading.Lock()

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "Server":
        self._listener = socket.create_server((self.host, self.requested_port), backlog=128)
        self._listener.settimeout(0.2)
        for i in range(self.workers):
            t = threading.Thread(target=self._work, name=f"httpd-worker-{i}", daemon=True)
            t.start()
            self._threads.append(t)
        self._acceptor = threading.Thread(target=self._accept, name="httpd-accept", daemon=True)
        self._acceptor.start()
        return self

    def alive_workers(self) -> int:
        return sum(t.is_alive() for t in self._threads)

    def stop(self) -> None:
        if self._stopping.is_set():
            return
        self._stopping.set()
        if self._acceptor:
            self._acceptor.join()
        self._listener.close()
        with self._active_lock:
            for conn in list(self._active):
                try:
                    conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
        for _ in self._threads:
            self._queue.put(None)
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()

    def _accept(self):
        while not self._stopping.is_set():
            try:
                conn, peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            while not self._stopping.is_set():
                try:
                    self._queue.put((conn, peer), timeout=0.2)
                    break
                except queue.Full:
                    continue
            else:
                conn.close()

    def _work(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            conn, peer = item
            with self._active_lock:
                self._active.add(conn)
            try:
                self._serve_connection(conn, peer)
            except Exception:
                log.exception("connection from %s failed", peer)
            finally:
                with self._active_lock:
                    self._active.discard(conn)
                try:
                    conn.close()
                except OSError:
                    pass

    def _serve_connection(self, conn, peer):
        conn.settimeout(self.timeout)
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        rfile = conn.makefile("rb")
        try:
            while not self._stopping.is_set():
                try:
                    request = self._read_request(rfile, conn, peer)
                except _Malformed as exc:
                    _send_error(conn, None, exc.status, str(exc), False)
                    _linger(conn)
                    return
                except (socket.timeout, ConnectionError, OSError):
                    return
                if request is None:
                    return
                keep = self.keep_alive and request.wants_keep_alive
                keep = self._dispatch(conn, request, keep)
                with self._count_lock:
                    self.requests_served += 1
                if not keep:
                    return
        finally:
            rfile.close()

    def _read_request(self, rfile, conn, peer) -> Optional[Request]:
        line = rfile.readline(MAX_LINE + 1)
        while line in (b"\r\n", b"\n"):
            line = rfile.readline(MAX_LINE + 1)
        if not line:
            return None
        if len(line) > MAX_LINE:
            raise _Malformed("request line too long", 414)
        parts = line.decode("latin-1").split()
        if len(parts) != 3 or not _METHOD.match(parts[0]) or parts[2] not in ("HTTP/1.0", "HTTP/1.1"):
            raise _Malformed("malformed request line")
        method, target, version = parts
        headers = Headers()
        while True:
            hline = rfile.readline(MAX_LINE + 1)
            if not hline:
                raise _Malformed("connection closed inside the header")
            if len(hline) > MAX_LINE:
                raise _Malformed("header line too long", 431)
            if hline in (b"\r\n", b"\n"):
                break
            if len(headers) >= MAX_HEADERS:
                raise _Malformed("too many header fields", 431)
            text = hline.decode("latin-1").rstrip("\r\n")
            name, sep, value = text.partition(":")
            if not sep or not name or name != name.strip() or name[0] in " \t":
                raise _Malformed(f"malformed header line {text!r}")
            headers.add(name, value.strip())
        if (headers.get("expect") or "").lower() == "100-continue":
            conn.sendall(b"HTTP/1.1 100 Continue\r\n\r\n")
        body = self._read_body(rfile, headers)
        return Request(method, target, version, headers, body, peer, self)

    def _read_body(self, rfile, headers) -> bytes:
        te = (headers.get("transfer-encoding") or "").lower()
        if te:
            if te != "chunked":
                raise _Malformed(f"unsupported transfer encoding {te!r}", 501)
            out = bytearray()
            while True:
                size_line = rfile.readline(MAX_LINE + 1)
                try:
                    size = int(size_line.split(b";")[0].strip(), 16)
                except ValueError:
                    raise _Malformed("malformed chunk size") from None
                if size == 0:
                    while rfile.readline(MAX_LINE + 1) not in (b"\r\n", b"\n", b""):
                        pass
                    return bytes(out)
                if len(out) + size > self.max_body:
                    raise _Malformed("request body too large", 413)
                out += _read_exact(rfile, size)
                rfile.readline(MAX_LINE + 1)
        length = headers.get("content-length")
        if length is None:
            return b""
        try:
            n = int(length)
        except ValueError:
            raise _Malformed("malformed Content-Length") from None
        if n < 0:
            raise _Malformed("negative Content-Length")
        if n > self.max_body:
            raise _Malformed("request body too large", 413)
        return _read_exact(rfile, n)

    def _dispatch(self, conn, request: Request, keep: bool) -> bool:
        """Run the handler and send its reply; returns whether the
        connection may be reused."""
        out = CgiOutput(conn, request, keep)
        try:
            result = self.handler(request, out)
            if result is False:
                raise NotFound(request.path)
            out.finish()
            return out.keep_alive
        except ReplyCondition as cond:
            if out.committed:
                log.warning("reply condition %r after output was committed", cond)
                return False
            _send_error(conn, request, cond.status, cond.message(), keep, cond.headers())
            return keep
        except (ConnectionError, socket.timeout):
            return False
        except Exception as exc:
            log.exception("handler error on %s %s", request.method, request.target)
            if out.committed:
                return False
            _send_error(conn, request, 500, f"Internal server error: {exc}", keep)
            return keep


def _linger(conn, limit: int = 1 << 20) -> None:
    # closing with unread input makes the kernel send RST, which can discard
    # the error reply before the client reads it
    try:
        conn.shutdown(socket.SHUT_WR)
        conn.settimeout(1.0)
        while limit > 0:
            data = conn.recv(65536)
            if not data:
                break
            limit -= len(data)
    except OSError:
        pass


def _read_exact(rfile, n: int) -> bytes:
    data = rfile.read(n)
    if len(data) != n:
        raise _Malformed("connection closed inside the body")
    return data


def serve(port: int, handler: Callable, **options) -> Server:
    """Start a server on *port* (0 picks a free port) and return it.

    Options: ``workers`` (default 4), ``keep_alive`` (default True),
    ``timeout`` in seconds (default 30), ``host``, ``sessions`` (a
    :class:`SessionManager`), ``backlog``, ``max_body``.
    """
    return Server(handler, port=port, **options).start()
