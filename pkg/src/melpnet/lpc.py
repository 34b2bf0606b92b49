"""Linear prediction: autocorrelation analysis and the LSF representation.

Polynomials are stored as length-11 numpy arrays [1, a1, ..., a10] for the
inverse filter A(z) = 1 + sum a_k z^-k; the synthesis filter is 1/A(z).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError, UnstableFilterError

LPC_ORDER = 10
MIN_LSF_GAP = 1e-4
# Classic conditioning constants: tiny white-noise correction on r[0] and a
# 0.994 bandwidth-expansion factor per coefficient power.
NOISE_CORRECTION = 1.0001
BW_EXPANSION = 0.994


def autocorrelate(windowed: np.ndarray, order: int = LPC_ORDER) -> np.ndarray:
    """Biased autocorrelation r[0..order] of an already-windowed segment."""
    x = np.asarray(windowed, dtype=np.float64)
    n = len(x)
    if n <= order:
        raise ShapeMismatchError(f"need more than {order} samples, got {n}")
    full = np.correlate(x, x, mode="full")
    return full[n - 1:n + order]


def levinson(r: np.ndarray) -> np.ndarray:
    """Levinson-Durbin recursion; returns [1, a1, ..., aP] minimizing
    prediction error for autocorrelation sequence r[0..P]."""
    r = np.asarray(r, dtype=np.float64)
    order = len(r) - 1
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    if err <= 0.0:
        return a  # degenerate (silent) input: flat predictor
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        a[1:i + 1] += k * a[i - 1::-1][:i]
        err *= 1.0 - k * k
        if err <= 0.0:
            break
    return a


def lpc_from_frame(samples: np.ndarray, order: int = LPC_ORDER) -> np.ndarray:
    """LPC inverse filter from a raw segment: Hamming window, autocorrelation
    with white-noise correction, Levinson, then bandwidth expansion."""
    x = np.asarray(samples, dtype=np.float64)
    w = x * np.hamming(len(x))
    r = autocorrelate(w, order)
    r[0] *= NOISE_CORRECTION
    a = levinson(r)
    a *= BW_EXPANSION ** np.arange(order + 1)
    return a


def _check_poly(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (LPC_ORDER + 1,) or a[0] != 1.0:
        raise ShapeMismatchError("expected [1, a1..a10] inverse filter")
    return a


def is_stable(a: np.ndarray, margin: float = 0.0) -> bool:
    """True when all roots of A(z) are strictly inside the unit circle."""
    roots = np.roots(_check_poly(a))
    return bool(len(roots) == 0 or np.max(np.abs(roots)) < 1.0 - margin)


def lpc_to_lsf(a: np.ndarray) -> np.ndarray:
    """Line spectral frequencies of a stable 10th-order inverse filter.

    P(z) = A(z) + z^-11 A(1/z) and Q(z) = A(z) - z^-11 A(1/z) have their
    roots on the unit circle; after removing the fixed roots at z = -1 and
    z = +1 the interleaved angles in (0, pi) are the LSFs.
    """
    a = _check_poly(a)
    if not is_stable(a):
        raise UnstableFilterError("LSFs undefined for non-minimum-phase filter")
    ext = np.concatenate([a, [0.0]])
    p = ext + ext[::-1]
    q = ext - ext[::-1]
    # Deflate the known roots: P by (1 + z^-1), Q by (1 - z^-1).
    p_def = _deflate(p, -1.0)
    q_def = _deflate(q, 1.0)
    ang_p = _unit_circle_angles(p_def)
    ang_q = _unit_circle_angles(q_def)
    if len(ang_p) != 5 or len(ang_q) != 5:
        raise UnstableFilterError("LSF root split failed")
    lsf = np.empty(LPC_ORDER)
    lsf[0::2] = ang_p
    lsf[1::2] = ang_q
    # True LSFs of a stable filter interleave; return them untouched so the
    # inverse transform round-trips. Gap enforcement is a separate concern
    # applied where frames are constructed or dequantized.
    if np.any(np.diff(lsf) <= 0.0):
        raise UnstableFilterError("LSF interlacing failed")
    return lsf


def _deflate(coeffs: np.ndarray, root_z_inv: float) -> np.ndarray:
    """Divide a polynomial in z^-1 by (1 - root·z^-1), synthetic division."""
    out = np.empty(len(coeffs) - 1)
    acc = 0.0
    for i in range(len(out)):
        acc = coeffs[i] + root_z_inv * acc
        out[i] = acc
    return out


def _unit_circle_angles(coeffs: np.ndarray) -> np.ndarray:
    roots = np.roots(coeffs)
    ang = np.angle(roots)
    return np.sort(ang[ang > 0.0])


def lsf_to_lpc(lsf: np.ndarray) -> np.ndarray:
    """Rebuild A(z) = (P(z) + Q(z)) / 2 from interleaved LSF angles."""
    lsf = np.asarray(lsf, dtype=np.float64)
    if lsf.shape != (LPC_ORDER,):
        raise ShapeMismatchError("expected 10 LSF values")
    if np.any(lsf <= 0.0) or np.any(lsf >= np.pi) or np.any(np.diff(lsf) <= 0.0):
        raise UnstableFilterError("LSFs must be strictly ascending in (0, pi)")
    p = np.array([1.0, 1.0])
    for w in lsf[0::2]:
        p = np.convolve(p, [1.0, -2.0 * np.cos(w), 1.0])
    q = np.array([1.0, -1.0])
    for w in lsf[1::2]:
        q = np.convolve(q, [1.0, -2.0 * np.cos(w), 1.0])
    a = 0.5 * (p + q)
    return a[:LPC_ORDER + 1]


def ensure_ascending(lsf: np.ndarray, gap: float = MIN_LSF_GAP) -> np.ndarray:
    """Force strictly ascending LSFs in (0, pi) with at least `gap` spacing."""
    out = np.sort(np.asarray(lsf, dtype=np.float64))
    out = np.clip(out, gap, np.pi - gap)
    for i in range(1, len(out)):
        if out[i] < out[i - 1] + gap:
            out[i] = out[i - 1] + gap
    # A forward push can run past pi - gap; walk back down if so.
    if out[-1] > np.pi - gap:
        out[-1] = np.pi - gap
        for i in range(len(out) - 2, -1, -1):
            if out[i] > out[i + 1] - gap:
                out[i] = out[i + 1] - gap
    return out


def lpc_power_spectrum(a: np.ndarray, n_points: int = 512) -> np.ndarray:
    """|1/A|^2 on n_points frequencies uniformly spanning [0, pi)."""
    a = np.asarray(a, dtype=np.float64)
    resp = np.fft.rfft(a, 2 * n_points)[:n_points]
    denom = np.abs(resp) ** 2
    return 1.0 / np.maximum(denom, 1e-30)
