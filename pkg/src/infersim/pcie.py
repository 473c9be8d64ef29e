"""Upstream data-transfer contention: one FIFO link per GPU.

Transfers with pinned memory complete strictly in submission order, so the
link is fully described by the timestamp at which it next becomes free plus
the predicted end of each outstanding transfer (needed to fold measured
transfer times back into the estimate).
"""
from __future__ import annotations

from collections import deque


class PcieLinkState:
    __slots__ = ("t_available", "pending")

    def __init__(self, t_available: float = 0.0):
        self.t_available = t_available
        # predicted end per outstanding reservation, oldest first
        self.pending: deque[float] = deque()

    def estimate_delay(self, now: float) -> float:
        """Wait before a transfer submitted at ``now`` can start."""
        return max(0.0, self.t_available - now)

    def reserve(self, now: float, duration: float) -> tuple[float, float]:
        """Claim the link for a transfer of ``duration`` ms submitted at
        ``now``; returns the (start, end) interval it will occupy."""
        if duration <= 0:
            raise ValueError(f"transfer duration must be positive, got {duration}")
        start = max(now, self.t_available)
        end = start + duration
        self.t_available = end
        self.pending.append(end)
        return start, end

    def calibrate(self, actual_transfer_end: float) -> None:
        """Fold the measured end of the oldest outstanding transfer back in.

        If nothing was reserved after it, the availability estimate is simply
        replaced; otherwise the signed correction shifts the estimate and all
        later predicted ends, keeping FIFO ordering intact.
        """
        if not self.pending:
            raise ValueError("no outstanding transfer to calibrate")
        predicted = self.pending.popleft()
        if not self.pending:
            self.t_available = actual_transfer_end
            return
        offset = actual_transfer_end - predicted
        if offset == 0.0:
            return
        self.t_available += offset
        self.pending = deque(p + offset for p in self.pending)


def estimate_upstream_delay(link: PcieLinkState, t_current: float) -> float:
    return link.estimate_delay(t_current)


def reserve_link(link: PcieLinkState, t_current: float, t_transfer: float) -> tuple[float, float]:
    return link.reserve(t_current, t_transfer)


def calibrate_link(link: PcieLinkState, actual_transfer_end: float) -> None:
    link.calibrate(actual_transfer_end)
