"""Hub-side clocks: real, time-scaled, and manually driven for tests."""

from __future__ import annotations

import time

from .timebase import TimeAnchor


class HubClock:
    """Boot-monotonic nanoseconds plus Unix wall time, optionally scaled.

    With scale > 1 both readings advance scale times faster than wall
    time, so accelerated runs emit timestamps in the accelerated (simulated)
    time base while wall-clock code is untouched.  boot_ns starts at 0 when
    the clock is created.
    """

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("time scale must be positive")
        self.scale = float(scale)
        self._mono0 = time.monotonic_ns()
        self._unix0_ns = time.time_ns()

    def _elapsed_ns(self) -> int:
        return int((time.monotonic_ns() - self._mono0) * self.scale)

    def boot_ns(self) -> int:
        return self._elapsed_ns()

    def unix_ns(self) -> int:
        return self._unix0_ns + self._elapsed_ns()

    def unix_ms(self) -> int:
        return self.unix_ns() // 1_000_000

    def anchor(self) -> TimeAnchor:
        # one elapsed reading feeds both bases so the pair is consistent
        e = self._elapsed_ns()
        return TimeAnchor(boot_ns=e, unix_ms=(self._unix0_ns + e) // 1_000_000)

    def readings(self) -> tuple[int, int]:
        """(boot_ns, unix_ns) from a single elapsed read."""
        e = self._elapsed_ns()
        return e, self._unix0_ns + e


class ManualClock:
    """Deterministic stand-in for HubClock; advance() moves both bases."""

    def __init__(self, boot_ns: int = 0, unix_ns: int = 1_700_000_000_000_000_000):
        self._boot_ns = boot_ns
        self._unix0_ns = unix_ns - boot_ns
        self.scale = 1.0

    def advance(self, ns: int) -> None:
        self._boot_ns += ns

    def boot_ns(self) -> int:
        return self._boot_ns

    def unix_ns(self) -> int:
        return self._unix0_ns + self._boot_ns

    def unix_ms(self) -> int:
        return self.unix_ns() // 1_000_000

    def anchor(self) -> TimeAnchor:
        return TimeAnchor(boot_ns=self._boot_ns, unix_ms=self.unix_ms())

    def readings(self) -> tuple[int, int]:
        return self._boot_ns, self.unix_ns()
