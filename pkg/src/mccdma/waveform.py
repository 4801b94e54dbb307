"""MC-CDMA transmit/receive chain.

Symbols are mapped to BPSK/QPSK, spread in frequency over ``G`` adjacent
subcarriers, carried by a unitary IFFT with cyclic prefix, and recovered by
the reverse path. All transforms act on the last axis so batches of
symbols, antennas or trials go through in one call.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import (
    BadGuardError,
    DegenerateWeightsError,
    DimensionMismatchError,
    LengthMismatchError,
    OddBitCountError,
)

__all__ = [
    "ModulationScheme",
    "Frame",
    "map_symbols",
    "demap_symbols",
    "spread_symbol",
    "spread",
    "mc_modulate",
    "mc_demodulate",
    "despread",
    "combining_weights",
]

_SQRT_HALF = np.sqrt(0.5)


class ModulationScheme(str, Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"

    @property
    def bits_per_symbol(self):
        return 1 if self is ModulationScheme.BPSK else 2


def map_symbols(bits, scheme):
    """Map bits to unit-energy constellation points.

    BPSK: 0 -> +1, 1 -> -1. QPSK: Gray map of bit pairs ``(b0, b1)`` onto
    ``((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)``.

    ``bits`` may carry leading batch axes; the last axis is the bit stream.
    """
    scheme = ModulationScheme(scheme)
    bits = np.asarray(bits)
    if scheme is ModulationScheme.BPSK:
        return (1.0 - 2.0 * bits).astype(np.complex128)
    if bits.shape[-1] % 2:
        raise OddBitCountError(f"QPSK needs an even number of bits, got {bits.shape[-1]}")
    pairs = bits.reshape(bits.shape[:-1] + (-1, 2))
    re = 1.0 - 2.0 * pairs[..., 0]
    im = 1.0 - 2.0 * pairs[..., 1]
    return _SQRT_HALF * (re + 1j * im)


def demap_symbols(symbols, scheme):
    """Hard-decision inverse of :func:`map_symbols`."""
    scheme = ModulationScheme(scheme)
    symbols = np.asarray(symbols)
    if scheme is ModulationScheme.BPSK:
        return (symbols.real < 0).astype(np.uint8)
    bits = np.stack([symbols.real < 0, symbols.imag < 0], axis=-1).astype(np.uint8)
    return bits.reshape(symbols.shape[:-1] + (-1,))


def spread_symbol(x, code):
    """Replicate one symbol onto ``G`` subcarriers with the code's chip signs."""
    return x * code.chips.astype(np.float64)


def spread(symbols, chips):
    """Superpose several users' symbols on one spreading block.

    Parameters
    ----------
    symbols : ndarray, shape (..., U)
        One symbol per user.
    chips : ndarray, shape (U, G)
        One code per user.

    Returns
    -------
    ndarray, shape (..., G)
    """
    return np.asarray(symbols) @ np.asarray(chips, dtype=np.float64)


def mc_modulate(column, n_fft, cp_len):
    """Unitary IFFT of ``N_sc`` subcarrier values plus a cyclic prefix.

    Works on the last axis; returns ``n_fft + cp_len`` samples per column.
    """
    column = np.asarray(column, dtype=np.complex128)
    n_sc = column.shape[-1]
    if cp_len < 0 or cp_len >= n_fft:
        raise BadGuardError(f"cp_len must lie in 0..{n_fft - 1}, got {cp_len}")
    if n_sc > n_fft:
        raise DimensionMismatchError(f"{n_sc} subcarriers do not fit in a {n_fft}-point FFT")
    samples = np.fft.ifft(column, n=n_fft, axis=-1, norm="ortho")
    if cp_len:
        samples = np.concatenate([samples[..., n_fft - cp_len:], samples], axis=-1)
    return samples


def mc_demodulate(samples, n_fft, cp_len, n_sc=None):
    """Strip the cyclic prefix and return the first ``n_sc`` unitary-FFT bins."""
    samples = np.asarray(samples, dtype=np.complex128)
    if cp_len < 0 or cp_len >= n_fft:
        raise BadGuardError(f"cp_len must lie in 0..{n_fft - 1}, got {cp_len}")
    if samples.shape[-1] != n_fft + cp_len:
        raise LengthMismatchError(
            f"expected {n_fft + cp_len} samples per symbol, got {samples.shape[-1]}"
        )
    bins = np.fft.fft(samples[..., cp_len:], axis=-1, norm="ortho")
    if n_sc is None:
        n_sc = n_fft
    return bins[..., :n_sc]


def combining_weights(H, noise_variance=0.0, rule="mmse"):
    """Per-subcarrier single-antenna combining weights.

    ``mmse``: conj(H) / (|H|^2 + noise); ``zf``: 1 / H; ``egc``: conj(H) / |H|.
    """
    H = np.asarray(H, dtype=np.complex128)
    if rule == "mmse":
        return np.conj(H) / (np.abs(H) ** 2 + noise_variance)
    if rule == "zf":
        return 1.0 / H
    if rule == "egc":
        return np.conj(H) / np.abs(H)
    raise ValueError(f"unknown combining rule {rule!r}")


def despread(bins, code, weights, channel=None):
    """Combine ``G`` received chips into one symbol estimate.

    Returns ``sum(w * c * r) / sum(w * H)``. The denominator is the combiner's
    gain on the wanted signal, so the estimate is unbiased for any weight
    rule. With ``channel=None`` the channel is taken as all ones.

    Leading axes of ``bins``, ``weights`` and ``channel`` broadcast; the last
    axis is the chip axis.
    """
    bins = np.asarray(bins)
    weights = np.asarray(weights)
    chips = code.chips if hasattr(code, "chips") else np.asarray(code)
    g = chips.shape[-1]
    if bins.shape[-1] != g or weights.shape[-1] != g:
        raise LengthMismatchError(
            f"bins ({bins.shape[-1]}), weights ({weights.shape[-1]}) and code ({g}) "
            "must share one length"
        )
    if channel is None:
        channel = np.ones(g)
    channel = np.asarray(channel)
    if channel.shape[-1] != g:
        raise LengthMismatchError(f"channel has length {channel.shape[-1]}, code has {g}")
    norm = np.sum(weights * channel, axis=-1)
    if np.any(np.abs(norm) < 1e-12):
        raise DegenerateWeightsError("combiner gain is below 1e-12")
    return np.sum(weights * chips * bins, axis=-1) / norm


@dataclass(frozen=True, eq=False)
class Frame:
    """A transmit grid over (subcarrier, symbol time, transmit antenna).

    ``pilot_mask`` marks pilot cells with shape ``(N_sc, T)`` and applies to
    every antenna.
    """

    grid: np.ndarray
    pilot_mask: np.ndarray
    n_fft: int
    cp_len: int

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.complex128)
        mask = np.asarray(self.pilot_mask, dtype=bool)
        if grid.ndim != 3:
            raise DimensionMismatchError(f"grid must be (N_sc, T, M_t), got {grid.shape}")
        if mask.shape != grid.shape[:2]:
            raise DimensionMismatchError(
                f"pilot_mask shape {mask.shape} does not match grid {grid.shape[:2]}"
            )
        if grid.shape[0] > self.n_fft:
            raise DimensionMismatchError(f"{grid.shape[0]} subcarriers exceed n_fft={self.n_fft}")
        if self.cp_len < 0 or self.cp_len >= self.n_fft:
            raise BadGuardError(f"cp_len must lie in 0..{self.n_fft - 1}, got {self.cp_len}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "pilot_mask", mask)

    @property
    def n_subcarriers(self):
        return self.grid.shape[0]

    @property
    def n_symbols(self):
        return self.grid.shape[1]

    @property
    def n_tx(self):
        return self.grid.shape[2]

    def to_samples(self):
        """Serialised time samples per antenna, shape ``(M_t, T * (n_fft + cp_len))``."""
        per_symbol = mc_modulate(np.transpose(self.grid, (2, 1, 0)), self.n_fft, self.cp_len)
        return per_symbol.reshape(self.n_tx, -1)

    @classmethod
    def from_samples(cls, samples, n_sc, n_fft, cp_len, pilot_mask):
        """Demodulate serialised samples ``(M, T * (n_fft + cp_len))`` back to a grid."""
        samples = np.asarray(samples)
        sym_len = n_fft + cp_len
        if samples.shape[-1] % sym_len:
            raise LengthMismatchError(
                f"{samples.shape[-1]} samples is not a whole number of {sym_len}-sample symbols"
            )
        per_symbol = samples.reshape(samples.shape[0], -1, sym_len)
        bins = mc_demodulate(per_symbol, n_fft, cp_len, n_sc)
        return cls(np.transpose(bins, (2, 1, 0)), pilot_mask, n_fft, cp_len)
