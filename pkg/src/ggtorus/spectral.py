"""FFT kernels shared by every field operation: derivatives, band limiting,
and zero-padded (3/2-rule) dealiased products on the periodic grid.

All fields live on the uniform N^n grid of the torus [0, 2*pi)^n with nodes
x_j = 2*pi*j/N.  The working spectral band is |k_i| <= N/2 - 1 per axis; the
asymmetric Nyquist bin k = N/2 is projected out everywhere (its odd
derivatives have no real nodal representative).  Products of two band
fields are evaluated on a zero-padded grid of M >= 3N/2 points, so the
retained modes of the result carry no aliasing error, then truncated back
to the band.  Consequences used throughout the test suite:

* linear operators (d, spectral division) are exact on band fields;
* a product whose true content still fits in the band is computed exactly;
* algebraic identities between different evaluation orders cancel to
  machine precision as long as intermediates stay inside the band.

Real FFTs are used throughout; stacked arrays are transformed over their
last ``n`` axes in single calls.
"""

from __future__ import annotations

import numpy as np

_KITS: dict[tuple[int, int], "SpectralKit"] = {}


def kit_for(n: int, N: int) -> "SpectralKit":
    try:
        return _KITS[(n, N)]
    except KeyError:
        k = SpectralKit(n, N)
        _KITS[(n, N)] = k
        return k


def _pad_size(N):
    M = (3 * N) // 2
    return M + (M % 2)


class SpectralKit:
    """Cached FFT machinery for one (dimension, resolution) pair.

    All methods accept stacked arrays whose last ``n`` axes are the grid
    axes; leading axes are broadcast through the FFTs unchanged.
    """

    def __init__(self, n, N):
        self.n = n
        self.N = N
        self.M = _pad_size(N)
        self.axes = tuple(range(-n, 0))
        self._vol = (2.0 * np.pi) ** n
        half = N // 2
        self._lo = slice(0, half)                     # freqs 0 .. N/2-1
        self._hi = slice(N - (half - 1), N)           # freqs -(N/2-1) .. -1
        self._hi_len = half - 1
        # derivative multipliers per axis, Nyquist zeroed, rfft layout
        full = np.fft.fftfreq(N) * N
        full[half] = 0.0
        self._k_full = full
        self._k_half = np.arange(half + 1, dtype=float)
        self._k_half[half] = 0.0
        self._mask = self._band_mask(N)

    # -- layout helpers ------------------------------------------------

    def _spec_shape(self, P):
        return (P,) * (self.n - 1) + (P // 2 + 1,)

    def _band_mask(self, P):
        """Boolean mask of working-band bins in a P-sized rfft spectrum."""
        half = self.N // 2
        m1 = np.zeros(P, dtype=bool)
        m1[:half] = True
        if self._hi_len:
            m1[P - self._hi_len:] = True
        mlast = np.zeros(P // 2 + 1, dtype=bool)
        mlast[:half] = True
        mask = np.ones(self._spec_shape(P), dtype=bool)
        for ax in range(self.n - 1):
            sh = [1] * self.n
            sh[ax] = P
            mask &= m1.reshape(sh)
        mask &= mlast.reshape([1] * (self.n - 1) + [-1])
        return mask

    def _corners(self, P):
        """(src_in_N_layout, dst_in_P_layout) slice blocks of the band."""
        pairs_full = [(self._lo, self._lo)]
        if self._hi_len:
            pairs_full.append((self._hi, slice(P - self._hi_len, P)))
        out = []
        for bits in range(2 ** (self.n - 1)):
            src, dst = [], []
            ok = True
            for ax in range(self.n - 1):
                which = (bits >> ax) & 1
                if which >= len(pairs_full):
                    ok = False
                    break
                s, d = pairs_full[which]
                src.append(s)
                dst.append(d)
            if not ok:
                continue
            src.append(slice(0, self.N // 2))
            dst.append(slice(0, self.N // 2))
            out.append((tuple(src), tuple(dst)))
        return out

    # -- spectrum-level API ---------------------------------------------

    def fwd(self, values):
        return np.fft.rfftn(values, axes=self.axes)

    def inv(self, spec, P=None):
        P = self.N if P is None else P
        return np.fft.irfftn(spec, s=(P,) * self.n, axes=self.axes)

    def deriv_factor(self, axis, P=None):
        """1j*k multiplier array (broadcastable) for d/dx_axis, rfft layout."""
        P = self.N if P is None else P
        if axis == self.n - 1:
            k = self._k_half if P == self.N else self._half_for(P)
            shape = [1] * self.n
            shape[-1] = len(k)
            return 1j * k.reshape(shape)
        k = self._k_full if P == self.N else self._full_for(P)
        shape = [1] * self.n
        shape[axis - self.n] = len(k)
        return 1j * k.reshape(shape)

    def _full_for(self, P):
        k = np.fft.fftfreq(P) * P
        k[P // 2] = 0.0
        return k

    def _half_for(self, P):
        k = np.arange(P // 2 + 1, dtype=float)
        k[P // 2] = 0.0
        return k

    def embed_spec(self, spec, P):
        """Embed the band of an N-layout spectrum into a P-layout spectrum."""
        big = np.zeros(spec.shape[:-self.n] + self._spec_shape(P), dtype=complex)
        scale = (P / self.N) ** self.n
        for src, dst in self._corners(P):
            big[(Ellipsis,) + dst] = spec[(Ellipsis,) + src] * scale
        return big

    def extract_spec(self, spec_big, P):
        """Inverse of embed_spec: band bins back into an N-layout spectrum."""
        small = np.zeros(spec_big.shape[:-self.n] + self._spec_shape(self.N),
                         dtype=complex)
        scale = (self.N / P) ** self.n
        for src, dst in self._corners(P):
            small[(Ellipsis,) + src] = spec_big[(Ellipsis,) + dst] * scale
        return small

    # -- nodal-value API --------------------------------------------------

    def deriv(self, values, axis):
        """Spectral d/dx_axis of nodal values (axis counted in 0..n-1)."""
        return self.inv(self.fwd(values) * self.deriv_factor(axis))

    def grad_stack(self, values):
        """All axis derivatives at once, stacked on a new leading axis."""
        spec = self.fwd(values)
        stack = np.stack([spec * self.deriv_factor(a) for a in range(self.n)])
        return self.inv(stack)

    def band_limit(self, values):
        """Project nodal values onto the working band (drop Nyquist bins)."""
        spec = self.fwd(values)
        out = np.where(self._mask, spec, 0.0)
        return self.inv(out)

    def pad(self, values, P=None):
        """Resample band content onto a P^n grid (default: dealiasing grid)."""
        P = self.M if P is None else P
        return self.inv(self.embed_spec(self.fwd(values), P), P)

    def pad_grad(self, values, P=None):
        """Axis derivatives evaluated directly on the padded grid."""
        P = self.M if P is None else P
        spec = self.embed_spec(self.fwd(values), P)
        stack = np.stack([spec * self.deriv_factor(a, P) for a in range(self.n)])
        return self.inv(stack, P)

    def unpad(self, padded):
        """Truncate P^n nodal values back to the N^n band (adjoint of pad
        with respect to the mean-normalized inner products)."""
        P = padded.shape[-1]
        return self.inv(self.extract_spec(np.fft.rfftn(padded, axes=self.axes), P))

    # -- products ----------------------------------------------------------

    def mul(self, a, b):
        """Dealiased pointwise product of two stacked nodal arrays."""
        return self.unpad(self.pad(a) * self.pad(b))

    def mul_padded(self, a_pad, b_pad):
        return self.unpad(a_pad * b_pad)

    # -- integrals -----------------------------------------------------------

    def integral(self, values):
        """Integral over the torus of a band-limited nodal field."""
        return float(np.mean(values, axis=self.axes) * self._vol)

    def integral_product(self, a, b):
        """Exact integral of a*b for two band fields (padded quadrature)."""
        prod = self.pad(a) * self.pad(b)
        return float(np.sum(np.mean(prod, axis=self.axes)) * self._vol)

    def grid_coords(self, P):
        """Node coordinate arrays of the P^n quadrature grid."""
        axes = [2.0 * np.pi * np.arange(P) / P for _ in range(self.n)]
        return np.meshgrid(*axes, indexing="ij")
