"""Fast invariant checks behind ``mccdma selftest``.

Each check is small enough to finish in well under a second; the full
statistical versions live in the test suite.
"""

import sys

import numpy as np

from .channel import ChannelModel, draw_taps, frequency_response
from .codes import autocorrelation, default_lfsr, generate_m_sequence, walsh_hadamard_set
from .estimation import design_training, estimate_ls, estimate_mmse, mmse_error_analytic
from .waveform import mc_demodulate, mc_modulate


def _check_m_sequences():
    for m in range(2, 11):
        code = generate_m_sequence(default_lfsr(m))
        assert code.length == 2**m - 1, f"m={m}: wrong period"
        assert int(np.sum(code.chips == -1)) == 2 ** (m - 1), f"m={m}: unbalanced"
        acf = autocorrelation(code)
        assert acf[0] == code.length and np.all(acf[1:] == -1), f"m={m}: autocorrelation"


def _check_walsh():
    for n in (1, 2, 4, 8, 16, 32, 64):
        W = np.stack([c.chips for c in walsh_hadamard_set(n)]).astype(int)
        assert np.array_equal(W @ W.T, n * np.eye(n, dtype=int)), f"order {n}"


def _check_modem(rng):
    for n_fft in (8, 16, 64, 256):
        for cp in (0, n_fft // 8, n_fft // 4):
            col = rng.standard_normal(n_fft) + 1j * rng.standard_normal(n_fft)
            back = mc_demodulate(mc_modulate(col, n_fft, cp), n_fft, cp)
            assert np.max(np.abs(back - col)) < 1e-12, f"roundtrip n_fft={n_fft} cp={cp}"


def _check_cyclic_prefix(rng):
    n_fft, cp = 64, 8
    for _ in range(20):
        h = rng.standard_normal(cp + 1) + 1j * rng.standard_normal(cp + 1)
        x = rng.standard_normal(n_fft) + 1j * rng.standard_normal(n_fft)
        rx = np.convolve(mc_modulate(x, n_fft, cp), h)[: n_fft + cp]
        H = np.fft.fft(h, n_fft)
        assert np.max(np.abs(mc_demodulate(rx, n_fft, cp) - H * x)) < 1e-10


def _check_noiseless_block(rng):
    model = ChannelModel(2, 3, "exponential", num_taps=4)
    H = frequency_response(draw_taps(model, rng), 64)
    P = design_training(2, 8).P
    Y = H @ P
    err = np.max(np.abs(estimate_ls(Y, P).H - H))
    assert err < 1e-10, f"LS error {err}"
    err = np.max(np.abs(estimate_mmse(Y, P, 3 * np.eye(2), np.inf).H - H))
    assert err < 1e-10, f"MMSE error {err}"


def _check_trace_formula(rng):
    n_t = n_r = 2
    P = design_training(n_t, 32).P
    R_H = n_r * np.eye(n_t)
    trials = 4000
    H = (rng.standard_normal((trials, n_r, n_t)) + 1j * rng.standard_normal((trials, n_r, n_t))) / np.sqrt(2)
    V = (rng.standard_normal((trials, n_r, 32)) + 1j * rng.standard_normal((trials, n_r, 32))) / np.sqrt(2)
    est = estimate_mmse(H @ P + V, P, R_H, 1.0).H
    empirical = np.mean(np.sum(np.abs(H - est) ** 2, axis=(1, 2)))
    theory = mmse_error_analytic(R_H, P, 1.0)
    assert abs(empirical / theory - 1) < 0.1, f"empirical {empirical:.4f} vs {theory:.4f}"


CHECKS = [
    ("m-sequence period/balance/autocorrelation", _check_m_sequences),
    ("walsh gram identity", _check_walsh),
    ("modem roundtrip", _check_modem),
    ("cyclic prefix circular convolution", _check_cyclic_prefix),
    ("noiseless block-pilot exactness", _check_noiseless_block),
    ("mmse error trace formula", _check_trace_formula),
]


def run_selftest(stream=sys.stdout, seed=2024):
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in CHECKS:
        try:
            if check.__code__.co_argcount:
                check(rng)
            else:
                check()
        except AssertionError as exc:
            ok = False
            print(f"FAIL {name}: {exc}", file=stream)
        else:
            print(f"PASS {name}", file=stream)
    return ok
