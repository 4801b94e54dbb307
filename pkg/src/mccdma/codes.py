"""Spreading sequences: LFSR m-sequences and Walsh-Hadamard sets."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._validation import check_power_of_two, is_power_of_two
from .exceptions import LengthMismatchError, NonMaximalPolynomialError, ZeroSeedError

__all__ = [
    "CodeFamily",
    "LfsrSpec",
    "SpreadingCode",
    "PRIMITIVE_TAPS",
    "generate_m_sequence",
    "walsh_hadamard_set",
    "periodic_correlation",
    "autocorrelation",
    "default_lfsr",
    "code_report",
]

# Fibonacci feedback taps (stage indices) giving a maximal-length register.
PRIMITIVE_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
}


class CodeFamily(str, Enum):
    MSEQUENCE = "mseq"
    WALSH = "walsh"


@dataclass(frozen=True)
class LfsrSpec:
    """Linear feedback shift register description.

    Parameters
    ----------
    degree : int
        Number of register stages ``m``.
    taps : tuple of int
        Stages (1-based) XOR-ed into the feedback. Stage ``m`` must be present.
    seed : tuple of int
        Initial register contents, stage 1 first. Must not be all zero.
    """

    degree: int
    taps: tuple
    seed: tuple

    def __post_init__(self):
        m = self.degree
        if not isinstance(m, (int, np.integer)) or m < 2:
            raise ValueError(f"degree must be an integer >= 2, got {m!r}")
        taps = tuple(sorted({int(t) for t in self.taps}, reverse=True))
        if not taps:
            raise ValueError("taps must be non-empty")
        if m not in taps:
            raise ValueError(f"taps must include the last stage {m}, got {taps}")
        if any(t < 1 or t > m for t in taps):
            raise ValueError(f"taps must lie in 1..{m}, got {taps}")
        seed = tuple(int(b) for b in self.seed)
        if len(seed) != m:
            raise ValueError(f"seed must have {m} bits, got {len(seed)}")
        if any(b not in (0, 1) for b in seed):
            raise ValueError(f"seed must contain only 0/1 bits, got {seed}")
        if not any(seed):
            raise ZeroSeedError("the all-zero register state is absorbing")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "seed", seed)

    @property
    def period(self):
        return 2**self.degree - 1


@dataclass(frozen=True, eq=False)
class SpreadingCode:
    """A +1/-1 chip sequence with its family metadata."""

    chips: np.ndarray
    family: CodeFamily
    index: int = 0
    length: int = field(init=False)

    def __post_init__(self):
        chips = np.array(self.chips, dtype=np.int8)
        if chips.ndim != 1 or chips.size == 0:
            raise ValueError("chips must be a non-empty 1-D sequence")
        if not np.all((chips == 1) | (chips == -1)):
            raise ValueError("every chip must be exactly +1 or -1")
        family = CodeFamily(self.family)
        n = chips.size
        if family is CodeFamily.MSEQUENCE and not is_power_of_two(n + 1):
            raise ValueError(f"an m-sequence has length 2^m - 1, got {n}")
        if family is CodeFamily.WALSH:
            if not is_power_of_two(n):
                raise ValueError(f"a Walsh code has power-of-two length, got {n}")
            if not 0 <= self.index < n:
                raise ValueError(f"Walsh index {self.index} out of range for length {n}")
        chips.flags.writeable = False
        object.__setattr__(self, "chips", chips)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "length", n)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, SpreadingCode):
            return NotImplemented
        return (
            self.family is other.family
            and self.index == other.index
            and np.array_equal(self.chips, other.chips)
        )

    def __hash__(self):
        return hash((self.family, self.index, self.chips.tobytes()))


def _lfsr_bits(spec, n_steps):
    """Clock a Fibonacci register ``n_steps`` times.

    Returns the output bits and the number of clocks after which the register
    first returned to its seed (0 if it never did).
    """
    m = spec.degree
    mask = (1 << m) - 1
    state = 0
    for i, b in enumerate(spec.seed):
        state |= b << i
    start = state
    tap_mask = 0
    for t in spec.taps:
        tap_mask |= 1 << (t - 1)

    out = np.empty(n_steps, dtype=np.uint8)
    first_return = 0
    for i in range(n_steps):
        out[i] = (state >> (m - 1)) & 1
        feedback = (state & tap_mask).bit_count() & 1
        state = ((state << 1) | feedback) & mask
        if state == start and not first_return:
            first_return = i + 1
    return out, first_return


def generate_m_sequence(spec):
    """Return one full period of the register's output as a spreading code.

    Bits map 0 -> +1 and 1 -> -1. The tap set is checked by clocking the
    register through one would-be period: if the seed state recurs before
    (or not at) ``2**m - 1`` clocks the polynomial is not maximal.

    Raises
    ------
    ZeroSeedError
        For an all-zero seed (raised when the LfsrSpec is built).
    NonMaximalPolynomialError
        If the achieved cycle length is not ``2**m - 1``.
    """
    period = spec.period
    bits, first_return = _lfsr_bits(spec, period)
    if first_return != period:
        raise NonMaximalPolynomialError(
            f"taps {spec.taps} give cycle length {first_return or 'unknown'} "
            f"instead of {period} for degree {spec.degree}"
        )
    chips = 1 - 2 * bits.astype(np.int8)
    return SpreadingCode(chips, CodeFamily.MSEQUENCE, index=0)


def default_lfsr(degree, seed=None):
    """An :class:`LfsrSpec` using the built-in primitive tap table."""
    if degree not in PRIMITIVE_TAPS:
        raise ValueError(f"no built-in primitive taps for degree {degree}")
    if seed is None:
        seed = (1,) * degree
    return LfsrSpec(degree, PRIMITIVE_TAPS[degree], tuple(seed))


def walsh_hadamard_set(order):
    """Rows of the Sylvester Hadamard matrix of size ``order`` as codes."""
    n = check_power_of_two(order, "order")
    h = np.ones((1, 1), dtype=np.int8)
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return [SpreadingCode(row, CodeFamily.WALSH, index=i) for i, row in enumerate(h)]


def periodic_correlation(a, b, lag):
    """Exact periodic correlation ``sum_k a[k] * b[(k + lag) mod G]``."""
    if a.length != b.length:
        raise LengthMismatchError(f"code lengths differ: {a.length} vs {b.length}")
    if not 0 <= lag < a.length:
        raise ValueError(f"lag must lie in 0..{a.length - 1}, got {lag}")
    x = a.chips.astype(np.int64)
    y = np.roll(b.chips.astype(np.int64), -lag)
    return int(np.dot(x, y))


def autocorrelation(code):
    """Periodic autocorrelation for every lag, as an int array."""
    return np.array([periodic_correlation(code, code, k) for k in range(code.length)])


def code_report(degrees=range(2, 11), walsh_orders=(4, 8, 16, 32)):
    """Plain-text table summarising the built-in code families.

    Columns: family, index, length, balance (count of -1 chips minus count of
    +1 chips), and the largest off-peak autocorrelation magnitude.
    """
    rows = [("family", "index", "length", "balance", "max_offpeak_acf")]
    for m in degrees:
        code = generate_m_sequence(default_lfsr(m))
        acf = autocorrelation(code)
        balance = int(np.sum(code.chips == -1) - np.sum(code.chips == 1))
        rows.append(("mseq", f"m={m}", code.length, balance, int(np.max(np.abs(acf[1:])))))
    for n in walsh_orders:
        for code in walsh_hadamard_set(n):
            acf = autocorrelation(code)
            balance = int(np.sum(code.chips == -1) - np.sum(code.chips == 1))
            offpeak = int(np.max(np.abs(acf[1:]))) if n > 1 else 0
            rows.append(("walsh", f"{n}:{code.index}", code.length, balance, offpeak))
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(str(v).rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)
