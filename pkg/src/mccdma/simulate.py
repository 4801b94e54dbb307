"""Seeded Monte-Carlo link simulation over an SNR grid.

A trial transmits ``blocks`` independent fading blocks. Each block is a
frame of training and data MC-CDMA symbols sent through a tapped-delay MIMO
channel in the time domain, demodulated, used to estimate the channel
(LS and/or MMSE), equalised, despread and demapped.

Every trial draws from its own random stream, derived from
``(master_seed, snr point, trial index)``, so a sweep is a pure function of
its config no matter how trials are scheduled. Trials are processed in
fixed-size chunks stacked along a leading batch axis; the chunking never
depends on the worker count, which keeps sweeps bitwise reproducible.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ._validation import is_power_of_two
from .channel import (
    ChannelModel,
    channel_correlation,
    complex_normal,
    convolve_mimo,
    draw_taps,
    frequency_response,
    snr_to_noise_variance,
)
from .codes import walsh_hadamard_set
from .estimation import (
    comb_pilot_positions,
    design_training,
    equivalent_snr,
    interpolate_dft,
    interpolate_linear,
    ls_filter,
    mmse_error_analytic,
    mmse_filter,
)
from .exceptions import MCCDMAError, SimulationError
from .waveform import ModulationScheme, demap_symbols, despread, map_symbols, mc_demodulate, mc_modulate, spread

__all__ = [
    "SimConfig",
    "TrialContribution",
    "MetricsRecord",
    "run_trial",
    "run_sweep",
    "ber_reference_rayleigh",
    "default_snr_grid",
]

log = logging.getLogger(__name__)

CHUNK_TRIALS = 32
THREADS_ENV = "MCCDMA_THREADS"


def default_snr_grid():
    return tuple(float(s) for s in range(0, 31, 5))


def _next_pow2(n):
    return 1 << max(0, (int(n) - 1).bit_length())


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a sweep.

    Fields left as ``None`` are derived by :meth:`resolved`: ``n_sc = pg *
    users``, ``n_fft`` the next power of two, ``cp_len = n_fft // 8``,
    ``n_train = n_t`` (shortest orthogonal training), ``n_pilots = n_sc // 4``
    and ``kept_taps = num_taps``.
    """

    n_t: int
    n_r: int
    pg: int
    users: int = 4
    n_sc: int = None
    n_fft: int = None
    cp_len: int = None
    scheme: str = "qpsk"
    profile: str = "exponential"
    num_taps: int = 4
    decay: float = 1.0
    spatial_correlation: float = 0.0
    pilot: str = "block"
    n_pilots: int = None
    n_train: int = None
    n_data: int = 4
    blocks: int = 1
    estimator: str = "both"
    interp: str = "linear"
    kept_taps: int = None
    combiner: str = "mmse"
    csi: str = "estimated"
    normalized_mse: bool = True
    snr_grid_db: tuple = field(default_factory=default_snr_grid)
    trials: int = 1000
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        if self.profile == "flat" and self.num_taps != 1:
            object.__setattr__(self, "num_taps", 1)

    def resolved(self):
        """A copy with every derived default filled in, validated."""
        cfg = self
        if cfg.n_sc is None:
            cfg = replace(cfg, n_sc=cfg.pg * cfg.users)
        if cfg.n_fft is None:
            cfg = replace(cfg, n_fft=_next_pow2(cfg.n_sc))
        if cfg.cp_len is None:
            cfg = replace(cfg, cp_len=cfg.n_fft // 8)
        if cfg.n_train is None:
            cfg = replace(cfg, n_train=cfg.n_t)
        if cfg.n_pilots is None:
            cfg = replace(cfg, n_pilots=max(1, cfg.n_sc // 4))
        if cfg.kept_taps is None:
            cfg = replace(cfg, kept_taps=cfg.num_taps)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ValueError(msg)

        for name in ("n_t", "n_r", "pg", "users", "n_data", "blocks", "trials"):
            value = getattr(self, name)
            need(isinstance(value, int) and value >= 1, f"{name} must be an integer >= 1")
        need(is_power_of_two(self.pg), "pg must be a power of two (Walsh code length)")
        need(self.users <= self.pg, "users must not exceed pg")
        need(self.n_sc >= 1 and self.n_sc <= self.n_fft, "need 1 <= n_sc <= n_fft")
        need(0 <= self.cp_len < self.n_fft, "need 0 <= cp_len < n_fft")
        need(self.scheme in ("bpsk", "qpsk"), "scheme must be bpsk or qpsk")
        need(self.profile in ("flat", "exponential"), "profile must be flat or exponential")
        need(self.num_taps >= 1, "num_taps must be >= 1")
        need(self.decay > 0, "decay must be > 0")
        need(0.0 <= self.spatial_correlation < 1.0, "spatial_correlation must lie in [0, 1)")
        need(self.pilot in ("block", "comb"), "pilot must be block or comb")
        need(self.estimator in ("ls", "mmse", "both"), "estimator must be ls, mmse or both")
        need(self.interp in ("linear", "dft"), "interp must be linear or dft")
        need(self.combiner in ("mmse", "zf", "egc"), "combiner must be mmse, zf or egc")
        need(self.csi in ("estimated", "perfect"), "csi must be estimated or perfect")
        need(len(self.snr_grid_db) >= 1, "snr_grid_db must not be empty")
        need(self.master_seed >= 0, "master_seed must be >= 0")
        if self.pilot == "block":
            need(self.n_sc % self.pg == 0, "pg must divide n_sc")
            need(self.n_train >= self.n_t, "n_train must be >= n_t")
        else:
            need(self.n_pilots >= 2 or self.interp == "dft", "comb pilots need n_pilots >= 2")
            need(self.n_sc % self.n_pilots == 0, "n_pilots must divide n_sc")
            need(self.n_data >= self.n_t, "comb pilots need n_data >= n_t training symbols")
            need(1 <= self.kept_taps <= self.n_pilots, "kept_taps must lie in 1..n_pilots")
            need(self.n_sc - self.n_pilots >= self.pg, "comb layout leaves fewer data subcarriers than pg")

    def channel_model(self):
        return ChannelModel(
            n_tx=self.n_t,
            n_rx=self.n_r,
            profile=self.profile,
            num_taps=self.num_taps,
            decay=self.decay,
            spatial_correlation=self.spatial_correlation,
            block_length=self.frame_symbols,
        )

    @property
    def frame_symbols(self):
        n_train = self.n_train if self.n_train is not None else self.n_t
        return n_train + self.n_data if self.pilot == "block" else self.n_data

    def as_dict(self):
        return asdict(self)


@dataclass
class TrialContribution:
    """Additive per-trial tallies; squared errors are raw Frobenius sums."""

    bit_errors: int = 0
    bits: int = 0
    symbol_errors: int = 0
    symbols: int = 0
    sq_err_ls: float = math.nan
    sq_err_mmse: float = math.nan
    n_matrices: int = 0


@dataclass
class MetricsRecord:
    """Aggregated results for one SNR point.

    ``mse_*`` are per-matrix mean squared Frobenius errors, divided by
    ``M_r * M_t`` when ``normalized`` is set; ``*_raw`` keep the plain
    per-matrix value. ``*_se`` are standard errors across trials.
    """

    snr_db: float
    mse_ls: float
    mse_mmse: float
    mse_theory: float
    ber: float
    ser: float
    bit_errors: int
    bits: int
    symbol_errors: int
    symbols: int
    trials: int
    mse_ls_raw: float = math.nan
    mse_mmse_raw: float = math.nan
    mse_ls_se: float = math.nan
    mse_mmse_se: float = math.nan
    ber_halfwidth: float = math.nan
    normalized: bool = True


def ber_reference_rayleigh(snr_db):
    """Average BPSK bit error rate over flat Rayleigh fading."""
    g = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    out = 0.5 * (1.0 - np.sqrt(g / (1.0 + g)))
    return float(out) if np.ndim(out) == 0 else out


class _Plan:
    """Per-config constants shared by every trial."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.scheme = ModulationScheme(cfg.scheme)
        self.bps = self.scheme.bits_per_symbol
        self.model = cfg.channel_model()
        codes = walsh_hadamard_set(cfg.pg)[: cfg.users]
        self.chips = np.stack([c.chips for c in codes]).astype(np.float64)
        self.codes = codes
        if cfg.pilot == "block":
            self.n_symbols = cfg.n_train + cfg.n_data
            self.training = design_training(cfg.n_t, cfg.n_train).P
            self.pilot_idx = np.arange(cfg.n_sc)
            data_candidates = np.arange(cfg.n_sc)
            self.data_symbols = slice(cfg.n_train, self.n_symbols)
        else:
            self.n_symbols = cfg.n_data
            self.training = design_training(cfg.n_t, cfg.n_data).P
            self.pilot_idx = comb_pilot_positions(cfg.n_sc, cfg.n_pilots)
            data_candidates = np.setdiff1d(np.arange(cfg.n_sc), self.pilot_idx)
            self.data_symbols = slice(0, self.n_symbols)
        self.n_data_symbols = cfg.n_data
        self.n_spread_blocks = data_candidates.size // cfg.pg
        self.data_idx = data_candidates[: self.n_spread_blocks * cfg.pg]
        self.sym_len = cfg.n_fft + cfg.cp_len
        self.n_samples = self.n_symbols * self.sym_len
        self.R_H = channel_correlation(self.model)
        self.ls = ls_filter(self.training)
        self.use_ls = cfg.estimator in ("ls", "both")
        self.use_mmse = cfg.estimator in ("mmse", "both")
        self.bits_shape = (
            cfg.n_t,
            cfg.n_data,
            self.n_spread_blocks,
            cfg.users * self.bps,
        )

    def point(self, snr_db):
        noise = snr_to_noise_variance(snr_db).variance
        rho = equivalent_snr(noise, self.cfg.n_t, self.cfg.n_r)
        mmse = mmse_filter(self.training, self.R_H, rho) if self.use_mmse else None
        theory = mmse_error_analytic(self.R_H, self.training, rho) if self.use_mmse else math.nan
        return noise, mmse, theory


def _trial_rng(master_seed, point_index, trial_index):
    seq = np.random.SeedSequence(master_seed, spawn_key=(point_index, trial_index))
    return np.random.Generator(np.random.PCG64(seq))


def _draw_trial(plan, noise, rng):
    cfg = plan.cfg
    taps = draw_taps(plan.model, rng, cfg.blocks)
    bits = rng.integers(0, 2, size=(cfg.blocks,) + plan.bits_shape, dtype=np.uint8)
    if noise > 0:
        v = complex_normal(rng, (cfg.blocks, cfg.n_r, plan.n_samples), noise)
    else:
        v = None
    return taps, bits, v


def _build_grid(plan, bits):
    cfg = plan.cfg
    batch = bits.shape[0]
    symbols = map_symbols(bits, plan.scheme)  # (B, M_t, T_d, n_sb, U)
    chips = spread(symbols, plan.chips) / math.sqrt(cfg.users)
    chips = chips.reshape(batch, cfg.n_t, cfg.n_data, -1)
    grid = np.zeros((batch, cfg.n_t, plan.n_symbols, cfg.n_sc), dtype=np.complex128)
    if cfg.pilot == "block":
        grid[:, :, : cfg.n_train, :] = plan.training[None, :, :, None]
    else:
        grid[:, :, :, plan.pilot_idx] = plan.training[None, :, :, None]
    grid[:, :, plan.data_symbols, plan.data_idx] = chips
    return grid


def _equalize(H, Y, noise, rule):
    """Per-subcarrier linear MIMO equaliser. Returns outputs and per-stream gains."""
    Hh = np.conj(np.swapaxes(H, -1, -2))
    if rule == "egc":
        W = Hh / np.linalg.norm(H, axis=-2)[..., :, None]
    else:
        gram = Hh @ H
        if rule == "mmse":
            gram = gram + noise * np.eye(H.shape[-1])
        W = np.linalg.solve(gram, Hh)
    gains = np.diagonal(W @ H, axis1=-2, axis2=-1)
    return W @ Y, gains


def _process(plan, noise, mmse, taps, bits, v):
    """Run a stacked batch of fading blocks; returns per-block tallies."""
    cfg = plan.cfg
    batch = taps.shape[0]
    stage = "modulate"
    try:
        grid = _build_grid(plan, bits)
        tx = mc_modulate(grid, cfg.n_fft, cfg.cp_len).reshape(batch, cfg.n_t, plan.n_samples)

        stage = "channel"
        rx = convolve_mimo(tx, taps)
        if v is not None:
            rx += v
        Yg = mc_demodulate(
            rx.reshape(batch, cfg.n_r, plan.n_symbols, plan.sym_len), cfg.n_fft, cfg.cp_len, cfg.n_sc
        )
        H = frequency_response(taps, cfg.n_fft, np.arange(cfg.n_sc))  # (B, K, M_r, M_t)

        stage = "estimate"
        if cfg.pilot == "block":
            Yp = np.transpose(Yg[:, :, : cfg.n_train, :], (0, 3, 1, 2))
        else:
            Yp = np.transpose(Yg[:, :, :, plan.pilot_idx], (0, 3, 1, 2))
        estimates = {}
        if plan.use_ls:
            estimates["ls"] = _fill_band(plan, Yp @ plan.ls)
        if plan.use_mmse:
            estimates["mmse"] = _fill_band(plan, Yp @ mmse)
        sq = {k: np.sum(np.abs(H - est) ** 2, axis=(1, 2, 3)) for k, est in estimates.items()}

        stage = "detect"
        if cfg.csi == "perfect":
            H_det = H
        else:
            H_det = estimates["mmse"] if plan.use_mmse else estimates["ls"]
        H_det = H_det[:, plan.data_idx]
        Yd = np.transpose(Yg[:, :, plan.data_symbols, :][..., plan.data_idx], (0, 3, 1, 2))
        Z, gains = _equalize(H_det, Yd, noise, cfg.combiner)  # (B, K_d, M_t, T_d), (B, K_d, M_t)

        G = cfg.pg
        Z = Z.reshape(batch, plan.n_spread_blocks, G, cfg.n_t, cfg.n_data)
        Z = np.moveaxis(Z, 2, -1)  # (B, n_sb, M_t, T_d, G)
        g = gains.reshape(batch, plan.n_spread_blocks, G, cfg.n_t)
        g = np.moveaxis(g, 2, -1)[:, :, :, None, :]
        ones = np.ones(G)
        est = np.stack(
            [despread(Z, chips, ones, g) for chips in plan.chips], axis=-1
        ) * math.sqrt(cfg.users)
        est = np.transpose(est, (0, 2, 3, 1, 4))  # (B, M_t, T_d, n_sb, U)
        bits_hat = demap_symbols(est, plan.scheme)
    except MCCDMAError as exc:
        raise SimulationError(str(exc), stage=stage) from exc
    except np.linalg.LinAlgError as exc:
        raise SimulationError(f"linear algebra failure: {exc}", stage=stage) from exc

    wrong = bits_hat != bits
    bit_err = wrong.reshape(batch, -1).sum(axis=1)
    sym_wrong = wrong.reshape(wrong.shape[:-1] + (cfg.users, plan.bps)).any(axis=-1)
    sym_err = sym_wrong.reshape(batch, -1).sum(axis=1)
    return bit_err, sym_err, sq


def _fill_band(plan, pilot_estimates):
    cfg = plan.cfg
    if cfg.pilot == "block":
        return pilot_estimates
    if cfg.interp == "linear":
        return interpolate_linear(pilot_estimates, cfg.n_sc, axis=1)
    return interpolate_dft(pilot_estimates, cfg.n_sc, cfg.kept_taps, axis=1)


def _run_chunk(plan, point_index, point, trial_indices):
    cfg = plan.cfg
    noise, mmse, _ = point
    draws = [
        _draw_trial(plan, noise, _trial_rng(cfg.master_seed, point_index, t)) for t in trial_indices
    ]
    taps = np.concatenate([d[0] for d in draws])
    bits = np.concatenate([d[1] for d in draws])
    v = np.concatenate([d[2] for d in draws]) if noise > 0 else None
    try:
        bit_err, sym_err, sq = _process(plan, noise, mmse, taps, bits, v)
    except SimulationError as exc:
        exc.snr_db = cfg.snr_grid_db[point_index]
        exc.trial = f"{trial_indices[0]}..{trial_indices[-1]}"
        raise

    n = len(trial_indices)
    per_trial = (n, cfg.blocks)
    bit_err = bit_err.reshape(per_trial).sum(axis=1)
    sym_err = sym_err.reshape(per_trial).sum(axis=1)
    sq = {k: s.reshape(per_trial).sum(axis=1) for k, s in sq.items()}
    bits_per_trial = cfg.blocks * int(np.prod(plan.bits_shape))
    symbols_per_trial = bits_per_trial // plan.bps
    out = []
    for i in range(n):
        out.append(
            TrialContribution(
                bit_errors=int(bit_err[i]),
                bits=bits_per_trial,
                symbol_errors=int(sym_err[i]),
                symbols=symbols_per_trial,
                sq_err_ls=float(sq["ls"][i]) if "ls" in sq else math.nan,
                sq_err_mmse=float(sq["mmse"][i]) if "mmse" in sq else math.nan,
                n_matrices=cfg.blocks * cfg.n_sc,
            )
        )
    return out


def run_trial(config, snr_db, trial_index):
    """One trial's contribution at ``snr_db``, which must be on the config's grid."""
    cfg = config.resolved()
    try:
        point_index = cfg.snr_grid_db.index(float(snr_db))
    except ValueError:
        raise ValueError(f"snr_db={snr_db} is not on the config's SNR grid") from None
    plan = _Plan(cfg)
    return _run_chunk(plan, point_index, plan.point(snr_db), [trial_index])[0]


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _aggregate(cfg, plan, snr_db, theory, contributions):
    bits = sum(c.bits for c in contributions)
    bit_errors = sum(c.bit_errors for c in contributions)
    symbols = sum(c.symbols for c in contributions)
    symbol_errors = sum(c.symbol_errors for c in contributions)
    n_mat = sum(c.n_matrices for c in contributions)
    scale = cfg.n_r * cfg.n_t
    norm = scale if cfg.normalized_mse else 1

    def mse(attr):
        vals = np.array([getattr(c, attr) for c in contributions])
        if np.all(np.isnan(vals)):
            return math.nan, math.nan, math.nan
        raw = float(math.fsum(vals)) / n_mat
        per_trial = vals / np.array([c.n_matrices for c in contributions]) / norm
        se = float(np.std(per_trial, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
        return raw / norm, raw, se

    mse_ls, mse_ls_raw, ls_se = mse("sq_err_ls")
    mse_mmse, mse_mmse_raw, mmse_se = mse("sq_err_mmse")
    ber = bit_errors / bits
    return MetricsRecord(
        snr_db=snr_db,
        mse_ls=mse_ls,
        mse_mmse=mse_mmse,
        mse_theory=theory / norm if not math.isnan(theory) else math.nan,
        ber=ber,
        ser=symbol_errors / symbols,
        bit_errors=bit_errors,
        bits=bits,
        symbol_errors=symbol_errors,
        symbols=symbols,
        trials=len(contributions),
        mse_ls_raw=mse_ls_raw,
        mse_mmse_raw=mse_mmse_raw,
        mse_ls_se=ls_se,
        mse_mmse_se=mmse_se,
        ber_halfwidth=1.96 * math.sqrt(max(ber * (1 - ber), 0.0) / bits),
        normalized=cfg.normalized_mse,
    )


def run_sweep(config, threads=None, progress=None):
    """Run every SNR point of ``config``; returns one :class:`MetricsRecord` each.

    ``threads`` (default from the ``MCCDMA_THREADS`` environment variable)
    only changes scheduling, never results. ``progress`` is an optional
    callable receiving each finished record.
    """
    cfg = config.resolved()
    plan = _Plan(cfg)
    threads = threads or _default_threads()
    chunks = [
        list(range(start, min(start + CHUNK_TRIALS, cfg.trials)))
        for start in range(0, cfg.trials, CHUNK_TRIALS)
    ]
    records = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for point_index, snr_db in enumerate(cfg.snr_grid_db):
            point = plan.point(snr_db)
            if pool is None:
                results = [_run_chunk(plan, point_index, point, c) for c in chunks]
            else:
                results = list(pool.map(lambda c: _run_chunk(plan, point_index, point, c), chunks))
            contributions = [c for chunk in results for c in chunk]
            record = _aggregate(cfg, plan, snr_db, point[2], contributions)
            log.info(
                "snr=%g dB mse_ls=%.4g mse_mmse=%.4g ber=%.4g",
                snr_db, record.mse_ls, record.mse_mmse, record.ber,
            )
            if progress is not None:
                progress(record)
            records.append(record)
    finally:
        if pool is not None:
            pool.shutdown()
    return records


CONFIG_FIELDS = tuple(f.name for f in fields(SimConfig))
