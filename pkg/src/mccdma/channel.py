"""Random MIMO channels and the noisy link ``Y = H P + V``."""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatchError, TooManyTapsError

__all__ = [
    "ChannelModel",
    "ChannelRealization",
    "NoiseSpec",
    "exponential_correlation",
    "power_delay_profile",
    "draw_taps",
    "draw_channel",
    "draw_block_fading",
    "frequency_response",
    "convolve_mimo",
    "complex_normal",
    "apply_channel",
    "snr_to_noise_variance",
    "channel_correlation",
]


def exponential_correlation(n, r):
    """``n x n`` matrix with entries ``r ** |i - j|``."""
    idx = np.arange(n)
    return float(r) ** np.abs(idx[:, None] - idx[None, :])


def _psd_sqrt(R):
    w, v = np.linalg.eigh(R)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def power_delay_profile(profile, num_taps=1, decay=1.0):
    """Tap powers summing to one.

    ``flat`` is a single unit tap; ``exponential`` gives tap ``l`` power
    proportional to ``exp(-decay * l)``.
    """
    if profile == "flat":
        return np.ones(1)
    if profile == "exponential":
        p = np.exp(-decay * np.arange(num_taps))
        return p / p.sum()
    raise ValueError(f"unknown delay profile {profile!r}")


@dataclass(frozen=True)
class ChannelModel:
    """Statistical description of an ``n_rx x n_tx`` fading channel.

    Spatial correlation follows the Kronecker model with exponential
    correlation ``r ** |i - j|`` on both the transmit and receive side.
    """

    n_tx: int
    n_rx: int
    profile: str = "flat"
    num_taps: int = 1
    decay: float = 1.0
    spatial_correlation: float = 0.0
    block_length: int = 1
    _tap_power: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.profile not in ("flat", "exponential"):
            raise ValueError(f"profile must be 'flat' or 'exponential', got {self.profile!r}")
        if self.profile == "flat" and self.num_taps != 1:
            object.__setattr__(self, "num_taps", 1)
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        if not self.decay > 0:
            raise ValueError("decay must be > 0")
        if not 0.0 <= self.spatial_correlation < 1.0:
            raise ValueError("spatial_correlation must lie in [0, 1)")
        if self.block_length < 1:
            raise ValueError("block_length must be >= 1")
        object.__setattr__(
            self, "_tap_power", power_delay_profile(self.profile, self.num_taps, self.decay)
        )

    @property
    def tap_power(self):
        return self._tap_power

    @property
    def rx_correlation(self):
        return exponential_correlation(self.n_rx, self.spatial_correlation)

    @property
    def tx_correlation(self):
        return exponential_correlation(self.n_tx, self.spatial_correlation)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Tap vectors ``taps[r, t, l]`` and their response ``freq_response[k, r, t]``."""

    taps: np.ndarray
    freq_response: np.ndarray
    n_fft: int
    occupied_bins: np.ndarray

    def matrix(self, k=0):
        """The ``M_r x M_t`` channel seen on occupied bin index ``k``."""
        return self.freq_response[k]


@dataclass(frozen=True)
class NoiseSpec:
    """Total complex noise variance, split equally over real and imaginary parts."""

    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")


def complex_normal(rng, shape, variance=1.0):
    """Circularly-symmetric complex Gaussian samples of total variance ``variance``."""
    z = rng.standard_normal(tuple(shape) + (2,))
    z *= math.sqrt(variance / 2.0)
    return z.view(np.complex128)[..., 0]


def draw_taps(model, rng, size=()):
    """Draw tap arrays of shape ``size + (n_rx, n_tx, num_taps)``."""
    size = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    L = model.num_taps
    white = complex_normal(rng, size + (L, model.n_rx, model.n_tx))
    if model.spatial_correlation > 0:
        white = _psd_sqrt(model.rx_correlation) @ white @ _psd_sqrt(model.tx_correlation)
    white = white * np.sqrt(model.tap_power)[:, None, None]
    return np.moveaxis(white, -3, -1)


def frequency_response(taps, n_fft, occupied_bins=None):
    """Per-bin channel matrices ``H[k] = sum_l h[l] exp(-2j pi k l / n_fft)``.

    ``taps`` has shape ``(..., M_r, M_t, L)``; the result has shape
    ``(..., K, M_r, M_t)`` with ``K`` the number of occupied bins.
    """
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.shape[-1] > n_fft:
        raise TooManyTapsError(f"{taps.shape[-1]} taps exceed the {n_fft}-point transform")
    H = np.fft.fft(taps, n=n_fft, axis=-1)
    if occupied_bins is not None:
        H = H[..., np.asarray(occupied_bins)]
    return np.moveaxis(H, -1, -3)


def draw_channel(model, rng, n_fft=None, occupied_bins=None):
    """One channel realization with its frequency response.

    ``n_fft`` defaults to the tap count, which for the flat profile gives a
    single bin.
    """
    taps = draw_taps(model, rng)
    if n_fft is None:
        n_fft = model.num_taps
    if occupied_bins is None:
        occupied_bins = np.arange(n_fft)
    occupied_bins = np.asarray(occupied_bins)
    H = frequency_response(taps, n_fft, occupied_bins)
    return ChannelRealization(taps, H, n_fft, occupied_bins)


def draw_block_fading(model, rng, n_symbols):
    """Per-symbol taps, constant within each block of ``model.block_length`` symbols.

    Returns shape ``(n_symbols, n_rx, n_tx, num_taps)``; consecutive blocks are
    independent draws.
    """
    n_blocks = -(-n_symbols // model.block_length)
    blocks = draw_taps(model, rng, n_blocks)
    return np.repeat(blocks, model.block_length, axis=0)[:n_symbols]


def convolve_mimo(samples, taps):
    """Linear MIMO convolution ``rx[r, n] = sum_t sum_l h[r, t, l] x[t, n - l]``.

    ``samples`` is ``(..., M_t, S)`` and ``taps`` is ``(..., M_r, M_t, L)``;
    the output is truncated to ``S`` samples.
    """
    samples = np.asarray(samples)
    taps = np.asarray(taps)
    S = samples.shape[-1]
    out = taps[..., 0] @ samples
    for lag in range(1, taps.shape[-1]):
        if lag >= S:
            break
        out[..., lag:] += taps[..., lag] @ samples[..., : S - lag]
    return out


def apply_channel(tx, H, noise, rng):
    """Return ``H @ tx + V`` with i.i.d. complex Gaussian ``V``.

    ``tx`` is ``(..., M_t, N)`` and ``H`` is ``(..., M_r, M_t)``; leading axes
    broadcast, so a stack of per-subcarrier ``H_k`` applies frequency-selective
    fading bin by bin.
    """
    tx = np.asarray(tx, dtype=np.complex128)
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim < 2 or tx.ndim < 2 or H.shape[-1] != tx.shape[-2]:
        raise DimensionMismatchError(
            f"cannot apply channel of shape {H.shape} to signal of shape {tx.shape}"
        )
    variance = noise.variance if isinstance(noise, NoiseSpec) else float(noise)
    y = H @ tx
    if variance > 0:
        y = y + complex_normal(rng, y.shape, variance)
    return y


def snr_to_noise_variance(rho_db, signal_power=1.0):
    """Noise variance for an SNR in dB: ``signal_power / 10 ** (rho_db / 10)``."""
    if not signal_power > 0:
        raise ValueError(f"signal_power must be > 0, got {signal_power}")
    if rho_db == math.inf:
        return NoiseSpec(0.0)
    return NoiseSpec(signal_power / 10.0 ** (rho_db / 10.0))


def channel_correlation(model):
    """Closed-form ``R_H = E{H^H H}`` for one subcarrier.

    Under the Kronecker model with unit total tap power this is
    ``n_rx * R_tx`` (the trace of the unit-diagonal receive correlation is
    ``n_rx``); it reduces to ``n_rx * I`` for uncorrelated antennas.
    """
    return model.n_rx * model.tx_correlation
