"""Implicit solve of (1 - a (Q - T_alpha)) y = r, cell by cell.

In alpha-Fourier space (modes k = -N/2 .. N/2-1) the collision operator is
diagonal and the angular drift only couples k to k +- 1, with one aliasing
link between the Nyquist mode and k = N/2 - 1. Every cell therefore carries
a cyclic tridiagonal system, solved here with Thomas sweeps vectorised over
cells and a Sherman-Morrison correction for the corner entries.
"""
from __future__ import annotations

import numpy as np


class AlphaImplicit:
    def __init__(self, G0, G1, D, a, nalpha):
        N = nalpha
        k = np.arange(N) - N // 2
        d = 1j * k.astype(float)
        d[0] = 0.0  # Nyquist derivative is zero
        # arrays are (mode, cell) so that each sweep step reads contiguous memory
        bp = 0.5 * (G1 + 1j * G0).ravel()[None, :]  # coefficient of e^{+i alpha} in b
        bm = np.conj(bp)
        dprev = np.roll(d, 1)[:, None]
        dnext = np.roll(d, -1)[:, None]
        diag = np.broadcast_to((1.0 + a * D * k.astype(float) ** 2)[:, None], (N, bp.shape[1])).astype(complex)
        lower = -0.5 * a * bp * (dprev + d[:, None])  # couples m to m-1 (cyclic)
        upper = -0.5 * a * bm * (dnext + d[:, None])  # couples m to m+1 (cyclic)
        self.N = N
        self.shape2 = G0.shape
        beta = lower[0].copy()  # row 0, column N-1
        alpha = upper[-1].copy()  # row N-1, column 0
        gamma = -diag[0]
        bb = diag.copy()
        bb[0] -= gamma
        bb[-1] -= alpha * beta / gamma
        self._lower, self._upper = lower, upper
        # Thomas factorisation of the modified tridiagonal part
        cp = np.empty_like(bb)
        den = np.empty_like(bb)
        den[0] = bb[0]
        cp[0] = upper[0] / den[0]
        for m in range(1, N):
            den[m] = bb[m] - lower[m] * cp[m - 1]
            cp[m] = upper[m] / den[m]
        self._cp = cp
        u = np.zeros_like(bb)
        u[0] = gamma
        u[-1] = alpha
        self._inv = 1.0 / den
        z = self._thomas(u)
        self._z = z
        self._beta_over_gamma = beta / gamma
        self._zden = 1.0 + z[0] + self._beta_over_gamma * z[-1]

    def _thomas(self, r):
        lower, cp, inv = self._lower, self._cp, self._inv
        y = np.empty_like(r)
        y[0] = r[0] * inv[0]
        for m in range(1, self.N):
            y[m] = (r[m] - lower[m] * y[m - 1]) * inv[m]
        for m in range(self.N - 2, -1, -1):
            y[m] -= cp[m] * y[m + 1]
        return y

    def solve(self, rhs):
        """rhs: real field (nx, ny, N); returns the real solution."""
        N = self.N
        c = np.fft.fftshift(np.fft.fft(rhs.reshape(-1, N), axis=-1), axes=-1).T.copy()
        x = self._thomas(c)
        fact = (x[0] + self._beta_over_gamma * x[-1]) / self._zden
        x -= fact[None, :] * self._z
        out = np.fft.ifft(np.fft.ifftshift(x.T, axes=-1), axis=-1).real
        return out.reshape(rhs.shape)
