"""Simultaneous sin/cos, compiled with numba when it is installed.

numpy's float64 sin and cos fall back to scalar libm calls on many builds,
which makes them the dominant cost of the trigonometric bases.  The kernel
below does a three-part reduction by pi/2 and evaluates the classic minimax
polynomials; it agrees with libm to an ulp or two for |theta| < 2**20.
Larger or non-finite arguments, and environments without numba, use numpy.
"""

from __future__ import annotations

import numpy as np

REDUCTION_LIMIT = 2.0 ** 20

_S = (1.58962301576546568060e-10, -2.50507477628578072866e-8, 2.75573136213857245213e-6,
      -1.98412698295895385996e-4, 8.33333333332211858878e-3, -1.66666666666666307295e-1)
_C = (-1.13585365213876817300e-11, 2.08757008419747316778e-9, -2.75573141792967388112e-7,
      2.48015872888517045348e-5, -1.38888888888730564116e-3, 4.16666666666665929218e-2)
# pi/2 split so that k * _P1 and k * _P2 are exact for the supported range
_P1, _P2, _P3 = 1.5707963267341256e+00, 6.077100506506192e-11, 2.0222662487959506e-21

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _kernel(f, sf, cf):
    s0, s1, s2, s3, s4, s5 = _S
    c0, c1, c2, c3, c4, c5 = _C
    for i in range(f.size):
        x = f[i]
        k = np.floor(x * 0.6366197723675814 + 0.5)
        r = ((x - k * _P1) - k * _P2) - k * _P3
        z = r * r
        sr = r + r * z * (((((s0 * z + s1) * z + s2) * z + s3) * z + s4) * z + s5)
        cr = 1.0 - 0.5 * z + z * z * (((((c0 * z + c1) * z + c2) * z + c3) * z + c4) * z + c5)
        q = int(k) & 3
        if q & 1:
            sr, cr = cr, sr
        sf[i] = -sr if q & 2 else sr
        cf[i] = -cr if (q + 1) & 2 else cr


_compiled = numba.njit(cache=True, nogil=True)(_kernel) if numba is not None else None


def sincos(theta) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sin(theta), cos(theta))`` as new arrays."""
    theta = np.asarray(theta, dtype=np.float64)
    if _compiled is None or theta.size < 64:
        return np.sin(theta), np.cos(theta)
    flat = np.ascontiguousarray(theta).ravel()
    s = np.empty_like(flat)
    c = np.empty_like(flat)
    _compiled(flat, s, c)
    wild = ~(np.abs(flat) < REDUCTION_LIMIT)
    if wild.any():
        s[wild], c[wild] = np.sin(flat[wild]), np.cos(flat[wild])
    return s.reshape(theta.shape), c.reshape(theta.shape)


def available() -> bool:
    return _compiled is not None
