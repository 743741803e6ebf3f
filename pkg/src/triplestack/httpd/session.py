"""Cookie-based sessions.

Session state lives in a process-wide table, never in a worker, because
consecutive requests of one session are normally served by different
workers.  Sessions idle for longer than the timeout are discarded along
with their data; nothing survives a server restart.
"""

from __future__ import annotations

import secrets
import threading
import time
from http.cookies import CookieError, SimpleCookie
from typing import Callable, Optional

_MISSING = object()


class Session:
    def __init__(self, sid: str, timeout: float, now: float):
        self.id = sid
        self.timeout = timeout
        self.created = now
        self.last_access = now
        self._data: dict = {}
        self._lock = threading.Lock()

    def expired(self, now: float) -> bool:
        return now - self.last_access > self.timeout

    def put(self, key, value) -> None:
        with self._lock:
            self._data[key] = value

    def get(self, key, default=None):
        with self._lock:
            return self._data.get(key, default)

    def delete(self, key) -> bool:
        with self._lock:
            return self._data.pop(key, _MISSING) is not _MISSING

    def update(self, key, fn: Callable, default=None):
        """Atomically replace the value of *key* by ``fn(old)``."""
        with self._lock:
            value = fn(self._data.get(key, default))
            self._data[key] = value
            return value

    def data(self) -> dict:
        with self._lock:
            return dict(self._data)


class SessionManager:
    def __init__(self, timeout: float = 600.0, cookie_name: str = "session", path: str = "/",
                 clock: Callable[[], float] = time.monotonic):
        self.timeout = timeout
        self.cookie_name = cookie_name
        self.path = path
        self.clock = clock
        self._sessions: dict = {}
        self._lock = threading.Lock()

    def _cookie_id(self, header: Optional[str]) -> Optional[str]:
        if not header:
            return None
        cookie = SimpleCookie()
        try:
            cookie.load(header)
        except CookieError:
            return None
        morsel = cookie.get(self.cookie_name)
        return morsel.value if morsel else None

    def lookup(self, cookie_header: Optional[str]) -> tuple:
        """Return ``(session, is_new)`` for a request carrying *cookie_header*."""
        sid = self._cookie_id(cookie_header)
        now = self.clock()
        with self._lock:
            self._expire(now)
            session = self._sessions.get(sid) if sid else None
            if session is not None:
                session.last_access = now
                return session, False
            sid = secrets.token_urlsafe(16)
            while sid in self._sessions:
                sid = secrets.token_urlsafe(16)
            session = Session(sid, self.timeout, now)
            self._sessions[sid] = session
            return session, True

    def _expire(self, now):
        for sid in [k for k, s in self._sessions.items() if s.expired(now)]:
            del self._sessions[sid]

    def end(self, session: Session) -> None:
        with self._lock:
            self._sessions.pop(session.id, None)

    def set_cookie(self, session: Session) -> str:
        return f"{self.cookie_name}={session.id}; Path={self.path}; HttpOnly"

    def __len__(self):
        with self._lock:
            self._expire(self.clock())
            return len(self._sessions)


def session_put(session: Session, key, value) -> None:
    session.put(key, value)


def session_get(session: Session, key, default=None):
    return session.get(key, default)


def session_delete(session: Session, key) -> bool:
    return session.delete(key)
