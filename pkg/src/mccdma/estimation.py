"""Training design, LS/MMSE channel estimation and pilot interpolation.

The estimators come in two flavours. Plain functions (:func:`estimate_ls`,
:func:`estimate_mmse`) take the received block ``Y`` (``M_r x N``) and the
training matrix ``P`` (``M_t x N``). The scikit-learn style classes
(:class:`LSChannelEstimator`, :class:`MMSEChannelEstimator`) view the same
problem as a multi-output linear regression ``y = X @ coef_.T`` with
``X = P.T`` and ``y = Y.T``, so ``coef_`` *is* the channel estimate and the
objects compose with ``get_params``/``set_params``/``clone``.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex, check_training_pair
from .exceptions import (
    BadTapCountError,
    DimensionMismatchError,
    NonPositiveSnrError,
    NotDivisibleError,
    SingularCorrelationError,
    SingularGramError,
    TooFewPilotsError,
    TooShortError,
)

__all__ = [
    "TrainingMatrix",
    "PilotLayout",
    "ChannelEstimate",
    "design_training",
    "ls_filter",
    "mmse_filter",
    "estimate_ls",
    "estimate_mmse",
    "mmse_error_analytic",
    "equivalent_snr",
    "comb_pilot_positions",
    "interpolate_linear",
    "interpolate_dft",
    "LSChannelEstimator",
    "MMSEChannelEstimator",
    "PilotInterpolator",
]

_MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class TrainingMatrix:
    """Pilot matrix ``P`` of shape ``(M_t, N)`` with orthogonal rows."""

    P: np.ndarray

    def __post_init__(self):
        P = check_complex(self.P, ndim=2, name="P")
        m_t, n = P.shape
        if n < m_t:
            raise TooShortError(f"need N >= M_t training symbols, got N={n}, M_t={m_t}")
        gram = P @ P.conj().T
        if not np.allclose(gram, n * np.eye(m_t), atol=1e-9 * n):
            raise ValueError("training rows must satisfy P P^H = N I")
        P.flags.writeable = False
        object.__setattr__(self, "P", P)

    @property
    def n_tx(self):
        return self.P.shape[0]

    @property
    def length(self):
        return self.P.shape[1]


def design_training(n_tx, length):
    """Orthogonal training from the first ``n_tx`` rows of the ``length``-point DFT.

    Every entry has unit modulus, so each antenna sends unit average power and
    ``P P^H = length * I``.
    """
    if length < n_tx:
        raise TooShortError(f"need N >= M_t training symbols, got N={length}, M_t={n_tx}")
    a = np.arange(n_tx)[:, None]
    n = np.arange(length)[None, :]
    # exact integer phase index keeps the unit circle points exact for small N
    P = np.exp(-2j * np.pi * ((a * n) % length) / length)
    return TrainingMatrix(P)


@dataclass(frozen=True)
class PilotLayout:
    """Pilot arrangement in the time-frequency grid.

    ``kind='block'`` devotes whole symbols to pilots every ``period`` frames;
    ``kind='comb'`` puts ``n_pilots`` uniformly spaced pilots in every symbol.
    """

    kind: str = "block"
    period: int = 1
    n_pilots: int = 0

    def __post_init__(self):
        if self.kind not in ("block", "comb"):
            raise ValueError(f"pilot layout must be 'block' or 'comb', got {self.kind!r}")
        if self.kind == "block" and self.period < 1:
            raise ValueError("block pilot period must be >= 1")
        if self.kind == "comb" and self.n_pilots < 1:
            raise ValueError("comb layout needs n_pilots >= 1")

    def positions(self, n_subcarriers):
        if self.kind == "block":
            return np.arange(n_subcarriers)
        return comb_pilot_positions(n_subcarriers, self.n_pilots)


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Estimated channel matrices, ``H`` of shape ``(..., M_r, M_t)``."""

    H: np.ndarray
    estimator: str
    interpolation: str = "none"
    layout: PilotLayout = None


def ls_filter(P):
    """Matrix ``G`` with ``H_LS = Y @ G``, i.e. ``P^H (P P^H)^-1``."""
    P = check_complex(P, ndim=2, name="P")
    gram = P @ P.conj().T
    if np.linalg.cond(gram) > _MAX_CONDITION:
        raise SingularGramError("P P^H is numerically singular")
    return np.linalg.solve(gram.T, P.conj()).T


def _check_mmse_args(R_H, rho, n_tx):
    R_H = check_complex(R_H, ndim=2, name="R_H")
    if R_H.shape != (n_tx, n_tx):
        raise DimensionMismatchError(f"R_H must be {n_tx}x{n_tx}, got {R_H.shape}")
    if not rho > 0:
        raise NonPositiveSnrError(f"rho must be > 0, got {rho}")
    if not np.allclose(R_H, R_H.conj().T, atol=1e-12 * max(1.0, np.abs(R_H).max())):
        raise SingularCorrelationError("R_H must be Hermitian")
    try:
        np.linalg.cholesky(R_H)
    except np.linalg.LinAlgError as exc:
        raise SingularCorrelationError("R_H must be positive definite") from exc
    if np.linalg.cond(R_H) > _MAX_CONDITION:
        raise SingularCorrelationError("R_H is numerically singular")
    return R_H


def _regularised_inverse(R_H, P, rho, n_tx):
    scale = rho / n_tx
    return np.linalg.inv(np.linalg.inv(R_H) + scale * (P @ P.conj().T))


def mmse_filter(P, R_H, rho, n_tx=None):
    """Matrix ``G`` with ``H_MMSE = Y @ G``.

    ``G = (rho / M_t) P^H (R_H^-1 + (rho / M_t) P P^H)^-1``. At ``rho = inf``
    the prior no longer matters and the LS filter is returned.
    """
    P = check_complex(P, ndim=2, name="P")
    if n_tx is None:
        n_tx = P.shape[0]
    if rho == math.inf:
        return ls_filter(P)
    R_H = _check_mmse_args(R_H, rho, P.shape[0])
    return (rho / n_tx) * P.conj().T @ _regularised_inverse(R_H, P, rho, n_tx)


def estimate_ls(Y, P):
    """Least-squares estimate ``Y P^H (P P^H)^-1``; ``Y`` may be batched."""
    Y, P = check_training_pair(Y, P)
    return ChannelEstimate(Y @ ls_filter(P), "ls")


def estimate_mmse(Y, P, R_H, rho, n_tx=None):
    """MMSE estimate ``(rho/M_t) Y P^H (R_H^-1 + (rho/M_t) P P^H)^-1``."""
    Y, P = check_training_pair(Y, P)
    return ChannelEstimate(Y @ mmse_filter(P, R_H, rho, n_tx), "mmse")


def mmse_error_analytic(R_H, P, rho, n_tx=None):
    """Expected squared Frobenius error ``tr{(R_H^-1 + (rho/M_t) P P^H)^-1}``."""
    P = check_complex(P, ndim=2, name="P")
    if n_tx is None:
        n_tx = P.shape[0]
    if rho == math.inf:
        return 0.0
    R_H = _check_mmse_args(R_H, rho, P.shape[0])
    return float(np.real(np.trace(_regularised_inverse(R_H, P, rho, n_tx))))


def equivalent_snr(noise_variance, n_tx, n_rx):
    """The ``rho`` that makes the MMSE filter exact for ``R_H = E{H^H H}``.

    ``R_H`` sums the ``n_rx`` row covariances, so the regulariser
    ``(M_t / rho) R_H^-1`` equals ``noise_variance * R_row^-1`` only when
    ``rho = M_t / (M_r * noise_variance)``. For unit-power pilots and
    ``M_t == M_r`` this is the plain per-antenna SNR ``1 / noise_variance``.
    """
    if noise_variance == 0:
        return math.inf
    return n_tx / (n_rx * noise_variance)


def comb_pilot_positions(n_subcarriers, n_pilots):
    """Uniform comb ``0, L, 2L, ...`` with spacing ``L = n_subcarriers / n_pilots``."""
    if n_pilots < 1 or n_subcarriers % n_pilots:
        raise NotDivisibleError(f"{n_pilots} pilots do not evenly divide {n_subcarriers} subcarriers")
    spacing = n_subcarriers // n_pilots
    return np.arange(n_pilots) * spacing


def interpolate_linear(pilot_values, n_subcarriers, axis=0):
    """Linear interpolation between comb pilots, edge-hold past the last one.

    ``pilot_values`` holds one estimate per pilot along ``axis``; other axes
    (antenna pairs, batches) are interpolated independently.
    """
    p = np.moveaxis(np.asarray(pilot_values), axis, 0)
    n_p = p.shape[0]
    if n_p < 2:
        raise TooFewPilotsError(f"linear interpolation needs >= 2 pilots, got {n_p}")
    spacing = n_subcarriers // comb_pilot_positions(n_subcarriers, n_p).size
    k = np.arange(n_subcarriers)
    left = np.minimum(k // spacing, n_p - 1)
    right = np.minimum(left + 1, n_p - 1)
    w = np.where(left == n_p - 1, 0.0, (k - left * spacing) / spacing)
    w = w.reshape((-1,) + (1,) * (p.ndim - 1))
    out = (1.0 - w) * p[left] + w * p[right]
    return np.moveaxis(out, 0, axis)


def interpolate_dft(pilot_values, n_subcarriers, kept_taps, axis=0):
    """Delay-domain interpolation of comb pilot estimates.

    The pilot estimates are taken to the delay domain with an ``N_p``-point
    inverse DFT, taps beyond ``kept_taps`` (noise only, for a channel shorter
    than that) are zeroed, and the result is zero-padded and transformed
    back on all ``n_subcarriers`` bins.
    """
    p = np.moveaxis(np.asarray(pilot_values, dtype=np.complex128), axis, 0)
    n_p = p.shape[0]
    comb_pilot_positions(n_subcarriers, n_p)
    if not 1 <= kept_taps <= n_p:
        raise BadTapCountError(f"kept_taps must lie in 1..{n_p}, got {kept_taps}")
    taps = np.fft.ifft(p, axis=0)[:kept_taps]
    out = np.fft.fft(taps, n=n_subcarriers, axis=0)
    return np.moveaxis(out, 0, axis)


def _as_training(X):
    """sklearn orientation ``X`` (N x M_t) to a training matrix ``P`` (M_t x N)."""
    return check_complex(X, ndim=2, name="X").T


class LSChannelEstimator(RegressorMixin, BaseEstimator):
    """Least-squares channel estimator in regression form.

    ``fit(X, y)`` takes ``X = P.T`` (training symbols x transmit antennas)
    and ``y = Y.T`` (training symbols x receive antennas). After fitting,
    ``coef_`` is the ``M_r x M_t`` channel estimate and ``predict`` returns
    the noiseless reception ``X @ coef_.T``.
    """

    def fit(self, X, y):
        P = _as_training(X)
        Y = check_complex(y, ndim=2, name="y").T
        check_training_pair(Y, P)
        self.filter_ = ls_filter(P)
        self.coef_ = Y @ self.filter_
        self.n_features_in_ = P.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return _as_training(X).T @ self.coef_.T

    def estimate(self, Y, P):
        """Channel estimate for ``Y`` (``M_r x N``) given ``P`` (``M_t x N``)."""
        return self.fit(np.asarray(P).T, np.asarray(Y).T).coef_

    def score(self, X, y, sample_weight=None):
        """Negative mean squared residual (complex data has no R^2)."""
        resid = check_complex(y, name="y") - self.predict(X)
        return -float(np.mean(np.abs(resid) ** 2))


class MMSEChannelEstimator(LSChannelEstimator):
    """MMSE channel estimator with prior correlation ``R_H`` and SNR ``rho``.

    Parameters
    ----------
    correlation : array-like, shape (M_t, M_t)
        ``R_H = E{H^H H}``. ``None`` uses ``n_rx * I``, the i.i.d. value,
        which needs ``n_rx``.
    snr : float
        Linear ``rho``. ``inf`` falls back to least squares.
    n_rx : int, optional
        Receive antennas, only used to build the default correlation.
    """

    def __init__(self, correlation=None, snr=1.0, n_rx=None):
        self.correlation = correlation
        self.snr = snr
        self.n_rx = n_rx

    def _correlation(self, n_tx, n_rx):
        if self.correlation is not None:
            return np.asarray(self.correlation)
        return (self.n_rx if self.n_rx is not None else n_rx) * np.eye(n_tx)

    def fit(self, X, y):
        P = _as_training(X)
        Y = check_complex(y, ndim=2, name="y").T
        check_training_pair(Y, P)
        R_H = self._correlation(P.shape[0], Y.shape[0])
        self.filter_ = mmse_filter(P, R_H, self.snr, P.shape[0])
        self.coef_ = Y @ self.filter_
        self.expected_error_ = mmse_error_analytic(R_H, P, self.snr, P.shape[0])
        self.n_features_in_ = P.shape[0]
        return self


class PilotInterpolator(TransformerMixin, BaseEstimator):
    """Fill a comb of pilot estimates out to every subcarrier.

    ``transform`` takes pilot estimates stacked on axis 0 (one entry per
    pilot, any trailing shape) and returns ``n_subcarriers`` entries.

    Parameters
    ----------
    n_subcarriers : int
    method : {'linear', 'dft'}
    kept_taps : int, optional
        Delay taps retained by the ``dft`` method.
    """

    def __init__(self, n_subcarriers=64, method="linear", kept_taps=None):
        self.n_subcarriers = n_subcarriers
        self.method = method
        self.kept_taps = kept_taps

    def fit(self, X, y=None):
        n_p = np.asarray(X).shape[0]
        self.pilot_positions_ = comb_pilot_positions(self.n_subcarriers, n_p)
        if self.method == "linear":
            if n_p < 2:
                raise TooFewPilotsError(f"linear interpolation needs >= 2 pilots, got {n_p}")
        elif self.method == "dft":
            kept = n_p if self.kept_taps is None else self.kept_taps
            if not 1 <= kept <= n_p:
                raise BadTapCountError(f"kept_taps must lie in 1..{n_p}, got {kept}")
        else:
            raise ValueError(f"unknown interpolation method {self.method!r}")
        self.n_pilots_ = n_p
        return self

    def transform(self, X):
        check_is_fitted(self, "pilot_positions_")
        X = np.asarray(X)
        if X.shape[0] != self.n_pilots_:
            raise DimensionMismatchError(f"fitted for {self.n_pilots_} pilots, got {X.shape[0]}")
        if self.method == "linear":
            return interpolate_linear(X, self.n_subcarriers)
        kept = self.n_pilots_ if self.kept_taps is None else self.kept_taps
        return interpolate_dft(X, self.n_subcarriers, kept)
