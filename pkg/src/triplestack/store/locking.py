"""Reader/writer coordination for the triple store.

Any number of readers may be active.  A single transaction owner holds the
writer mutex for the lifetime of its (outermost) transaction; readers keep
running until it commits.  Committing closes the gate to new readers and
waits for the active ones to drain.  The committing thread itself may still
read, which lets monitor callbacks query the store.
"""

from __future__ import annotations

import threading


class StoreLock:
    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._committer = None
        self._writer = threading.Lock()
        self._local = threading.local()

    # -- per-thread read accounting

    @property
    def my_reads(self) -> int:
        return getattr(self._local, "reads", 0)

    def acquire_read(self):
        me = threading.get_ident()
        with self._cond:
            while self._committer is not None and self._committer != me:
                self._cond.wait()
            self._readers += 1
        self._local.reads = self.my_reads + 1

    def release_read(self):
        self._local.reads = self.my_reads - 1
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    @property
    def active_readers(self) -> int:
        return self._readers

    # -- writer side

    def acquire_write(self):
        self._writer.acquire()

    def release_write(self):
        self._writer.release()

    def begin_commit(self):
        """Block new readers and wait until only our own reads remain."""
        me = threading.get_ident()
        mine = self.my_reads
        with self._cond:
            self._committer = me
            while self._readers > mine:
                self._cond.wait()

    def end_commit(self):
        with self._cond:
            self._committer = None
            self._cond.notify_all()
