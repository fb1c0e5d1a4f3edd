"""Spectral scoring and pruning of token sequences.

The pruning pipeline runs entirely along the token axis, independently per
feature channel:

1. forward DFT of the (n, d) token matrix over the token index,
2. a Hamming-tapered low-pass mask over frequency bins,
3. inverse DFT back to the token domain,
4. per-token L2 energy of the filtered (complex) signal,
5. keep the top-k tokens by energy, re-emitted in original order with their
   *unfiltered* features -- filtering is for scoring only.

Two mask modes are provided.  ``as-written`` zeroes every bin above the
cutoff, including the conjugate bins near n, so the filtered signal is
generally complex and energies use the complex modulus.  ``symmetric``
mirrors the passband onto the conjugate bins (coeffs[k] == coeffs[n-k],
DC weight 1), which keeps real inputs real after inverse transform.

Transforms are computed with an iterative radix-2 kernel for power-of-two
lengths and Bluestein's chirp algorithm otherwise, so any token count works
(counts after merging are rarely powers of two).  Correctness is pinned to a
direct-summation oracle in the test suite, not to the fast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tokens import ComplexSequence, TokenSequence

FILTER_MODES = ("as-written", "symmetric")


# ---------------------------------------------------------------------------
# Transform kernels (token axis = axis 0, channels vectorized on axis 1).

def _bit_reversal(n: int) -> np.ndarray:
    levels = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    j = np.arange(n, dtype=np.int64)
    for _ in range(levels):
        rev = (rev << 1) | (j & 1)
        j >>= 1
    return rev


def _fft_pow2(x: np.ndarray, sign: int) -> np.ndarray:
    """Iterative Cooley-Tukey for n a power of two.  x: complex (n, d)."""
    n, d = x.shape
    if n <= 1:
        return x.astype(np.complex128, copy=True)
    y = x[_bit_reversal(n)].astype(np.complex128, copy=True)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)[:, None]
        y = y.reshape(n // size, size, d)
        even = y[:, :half, :].copy()
        odd = y[:, half:, :] * tw
        y[:, :half, :] = even + odd
        y[:, half:, :] = even - odd
        y = y.reshape(n, d)
        size *= 2
    return y


def _fft_bluestein(x: np.ndarray, sign: int) -> np.ndarray:
    """Arbitrary-length transform as a chirped power-of-two convolution."""
    n, d = x.shape
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n, dtype=np.int64)
    # k^2 mod 2n keeps chirp angles small (exp has period 2n in the exponent)
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    a = np.zeros((m, d), dtype=np.complex128)
    a[:n] = x * chirp[:, None]
    b = np.zeros((m, 1), dtype=np.complex128)
    b[:n, 0] = np.conj(chirp)
    if n > 1:
        b[m - n + 1:, 0] = np.conj(chirp[1:])[::-1]
    conv = _fft_pow2(_fft_pow2(a, -1) * _fft_pow2(b, -1), +1) / m
    return conv[:n] * chirp[:, None]


def _transform(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[0]
    if n == 0:
        return x.astype(np.complex128, copy=True)
    if n & (n - 1) == 0:
        return _fft_pow2(x, sign)
    return _fft_bluestein(x, sign)


# ---------------------------------------------------------------------------
# Public spectral API.

def dft_forward(seq: TokenSequence) -> ComplexSequence:
    """X[k] = sum_n x[n] exp(-2i*pi*k*n/N) per channel, along the token axis."""
    if seq.n < 1:
        raise ShapeError("dft_forward needs at least one token")
    return ComplexSequence.from_complex(_transform(seq.data.astype(np.complex128), -1))


def dft_inverse(freq: ComplexSequence) -> ComplexSequence:
    """x[n] = (1/N) sum_k X[k] exp(+2i*pi*k*n/N); stays complex on purpose.

    After an asymmetric mask the time-domain signal has a genuine imaginary
    part, which the energy scoring keeps.
    """
    if freq.n == 0:
        return ComplexSequence.from_complex(np.zeros((0, freq.d), dtype=np.complex128))
    return ComplexSequence.from_complex(_transform(freq.as_complex(), +1) / freq.n)


@dataclass(frozen=True)
class SpectrumFilter:
    """Length-n low-pass mask with Hamming taper up to cutoff bin sigma_t."""

    n: int
    sigma_t: int
    mode: str
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(self.n)
        if np.any(coeffs < 0) or np.any(coeffs > 1):
            raise ValueError("filter coefficients must lie in [0, 1]")
        coeffs = np.array(coeffs, copy=True)
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)


def make_filter(n: int, sigma_t: int, mode: str = "as-written") -> SpectrumFilter:
    """Build the low-pass mask.

    as-written: coeffs[k] = 0.54 - 0.46*cos(2*pi*k/(n-1)) for k <= sigma_t,
    zero above.  symmetric: a half-Hamming taper (1 at DC, 0.08 at the
    cutoff) mirrored onto bins n-k so the mask is conjugate-symmetric.
    """
    if not 0 <= sigma_t < n:
        raise ValueError(f"sigma_t={sigma_t} outside 0..{n - 1}")
    if mode not in FILTER_MODES:
        raise ValueError(f"unknown filter mode {mode!r}")
    k = np.arange(n)
    if mode == "as-written":
        if n == 1:
            taper = np.array([0.08])
        else:
            taper = 0.54 - 0.46 * np.cos(2 * np.pi * k / (n - 1))
        coeffs = np.where(k <= sigma_t, taper, 0.0)
    else:
        low = np.zeros(n)
        if sigma_t == 0:
            low[0] = 1.0
        else:
            ks = np.arange(sigma_t + 1)
            low[: sigma_t + 1] = 0.54 + 0.46 * np.cos(np.pi * ks / sigma_t)
        coeffs = np.maximum(low, low[(n - k) % n])
    return SpectrumFilter(n, sigma_t, mode, coeffs)


def apply_filter(freq: ComplexSequence, filt: SpectrumFilter) -> ComplexSequence:
    """Bin-wise real scaling of the spectrum across all channels."""
    if freq.n != filt.n:
        raise ShapeError(f"spectrum has {freq.n} bins, filter {filt.n}")
    c = filt.coeffs[:, None]
    return ComplexSequence(freq.n, freq.d, freq.re * c, freq.im * c)


def token_energy(filtered: ComplexSequence) -> np.ndarray:
    """Per-token L2 norm over channels of the complex filtered signal."""
    return np.sqrt(np.sum(filtered.re ** 2 + filtered.im ** 2, axis=1))


def cutoff_from_ratio(n: int, sigma_ratio: float) -> int:
    """Cutoff bin for a pass fraction of the n bins: max(0, ceil(r*n) - 1)."""
    if not 0 < sigma_ratio <= 1:
        raise ValueError(f"sigma_ratio={sigma_ratio} outside (0, 1]")
    return max(0, math.ceil(sigma_ratio * n) - 1)


@dataclass(frozen=True)
class EnergyRanking:
    """Per-token energies plus the ascending indices that survived top-k."""

    energies: np.ndarray = field(repr=False)
    kept: np.ndarray = field(repr=False)

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=np.float64).reshape(-1)
        kept = np.asarray(self.kept, dtype=np.int64).reshape(-1)
        if kept.size:
            if np.any(np.diff(kept) <= 0):
                raise ValueError("kept indices must be strictly increasing")
            if kept[0] < 0 or kept[-1] >= energies.size:
                raise ValueError("kept indices out of range")
        for a in (energies, kept):
            a.flags.writeable = False
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "kept", kept)


def topk_ascending(energies: np.ndarray, keep: int) -> np.ndarray:
    """Indices of the `keep` largest energies, returned in ascending order.

    Ties break toward the lower index (stable sort on descending energy).
    """
    order = np.argsort(-np.asarray(energies, dtype=np.float64), kind="stable")
    return np.sort(order[:keep])


def spectral_prune(seq: TokenSequence, sigma_ratio: float, keep: int,
                   mode: str = "as-written") -> tuple[TokenSequence, EnergyRanking]:
    """Keep the `keep` highest-energy tokens after low-pass scoring.

    The survivors carry their original (unfiltered) features and come out in
    original order.  Ties in energy break toward the lower original index so
    results are reproducible.
    """
    if not 0 <= keep <= seq.n:
        raise ShapeError(f"keep={keep} outside 0..{seq.n}")
    if seq.n == 0:
        empty = np.zeros(0)
        return seq, EnergyRanking(empty, empty.astype(np.int64))
    freq = dft_forward(seq)
    filt = make_filter(seq.n, cutoff_from_ratio(seq.n, sigma_ratio), mode)
    filtered = dft_inverse(apply_filter(freq, filt))
    energies = token_energy(filtered)
    kept = topk_ascending(energies, keep)
    pruned = TokenSequence(keep, seq.d, seq.data[kept], seq.positions[kept], seq.orig_len)
    return pruned, EnergyRanking(energies, kept)
