"""In-process rate limiting: concurrent requests and requests per minute."""

from __future__ import annotations

import threading
import time
from collections import deque
from contextlib import contextmanager
from typing import Callable, Iterator


class RateLimiter:
    """Bounds in-flight requests and request starts per minute.

    ``requests_per_minute == 0`` disables the per-minute cap.  The clock
    and sleeper are injectable so tests never wait on wall time.
    """

    def __init__(
        self,
        max_in_flight: int,
        requests_per_minute: int = 0,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if requests_per_minute < 0:
            raise ValueError("requests_per_minute must be >= 0")
        self.max_in_flight = max_in_flight
        self.requests_per_minute = requests_per_minute
        self._clock = clock
        self._sleep = sleeper
        self._slots = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()
        self._starts: deque[float] = deque()

    def _await_minute_window(self) -> None:
        if self.requests_per_minute <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._starts and now - self._starts[0] >= 60.0:
                    self._starts.popleft()
                if len(self._starts) < self.requests_per_minute:
                    self._starts.append(now)
                    return
                wait = 60.0 - (now - self._starts[0])
            self._sleep(max(wait, 0.001))

    def acquire(self) -> None:
        self._slots.acquire()
        try:
            self._await_minute_window()
        except BaseException:
            self._slots.release()
            raise

    def release(self) -> None:
        self._slots.release()

    @contextmanager
    def slot(self) -> Iterator[None]:
        self.acquire()
        try:
            yield
        finally:
            self.release()
