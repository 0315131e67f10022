"""Independent brute-force oracles for the edge detectors.

Deliberately naive: every window position is materialised as a list slice
and scanned with plain index arithmetic, with no shared code with the
package under test.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

Sample = Tuple[int, float]  # (timestamp_us, rssi_dbm)


def brute_force_reversed_edge(
    trace: Sequence[Sample], w: int, tau: float
) -> Optional[Tuple[int, float, int]]:
    """All-windows scan of the reversed trace.

    Returns (edge_timestamp_us, peak_rssi, trigger_index) of the first
    window, in reversed order, whose max-minus-last drop reaches tau.
    """
    rev = list(trace)[::-1]
    n = len(rev)
    if n < w:
        return None
    for end in range(w - 1, n):
        window = rev[end - w + 1 : end + 1]
        max_idx = 0
        for k in range(1, w):
            if window[k][1] > window[max_idx][1]:
                max_idx = k
        r_max = window[max_idx][1]
        r_current = window[-1][1]
        if r_max - r_current >= tau:
            return (window[max_idx][0], r_max, end)
    return None


def brute_force_forward_edge(
    trace: Sequence[Sample], w: int, tau: float
) -> Optional[Tuple[int, float, int]]:
    """All-windows scan in arrival order.

    Returns (edge_timestamp_us, peak_rssi, trigger_index) where the edge is
    the second-to-last sample of the first firing window.
    """
    n = len(trace)
    if n < w:
        return None
    for end in range(w - 1, n):
        window = list(trace[end - w + 1 : end + 1])
        max_idx = 0
        for k in range(1, w):
            if window[k][1] > window[max_idx][1]:
                max_idx = k
        r_max = window[max_idx][1]
        r_current = window[-1][1]
        if r_max - r_current >= tau:
            return (window[-2][0], r_max, end)
    return None


def brute_force_threshold(
    trace: Sequence[Sample], threshold: float, reverse: bool
) -> Optional[int]:
    ordered = list(trace)[::-1] if reverse else list(trace)
    for t, r in ordered:
        if r >= threshold:
            return t
    return None
