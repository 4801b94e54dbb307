import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hadamard

from mccdma.codes import (
    PRIMITIVE_TAPS,
    CodeFamily,
    LfsrSpec,
    SpreadingCode,
    _lfsr_bits,
    autocorrelation,
    code_report,
    default_lfsr,
    generate_m_sequence,
    periodic_correlation,
    walsh_hadamard_set,
)
from mccdma.exceptions import (
    LengthMismatchError,
    NonMaximalPolynomialError,
    NotPowerOfTwoError,
    ZeroSeedError,
)


def brute_force_correlation(a, b, lag):
    n = len(a)
    return sum(int(a[k]) * int(b[(k + lag) % n]) for k in range(n))


class TestMSequence:
    def test_degree_three_has_period_seven(self):
        code = generate_m_sequence(LfsrSpec(3, (3, 1), (1, 0, 0)))
        assert code.length == 7
        assert code.family is CodeFamily.MSEQUENCE

    def test_degree_two_hand_enumeration(self):
        # states (s1, s2): 11 -> 01 -> 10 -> 11, output is s2: 1, 1, 0
        code = generate_m_sequence(LfsrSpec(2, (1, 2), (1, 1)))
        assert code.chips.tolist() == [-1, -1, 1]

    def test_zero_seed_rejected(self):
        with pytest.raises(ZeroSeedError):
            generate_m_sequence(LfsrSpec(3, (1, 3), (0, 0, 0)))

    def test_non_maximal_taps_rejected(self):
        # x^4 + x^2 + 1 = (x^2 + x + 1)^2 is not primitive
        with pytest.raises(NonMaximalPolynomialError):
            generate_m_sequence(LfsrSpec(4, (4, 2), (1, 0, 0, 0)))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(degree=1, taps=(1,), seed=(1,)),
            dict(degree=3, taps=(), seed=(1, 0, 0)),
            dict(degree=3, taps=(1, 2), seed=(1, 0, 0)),
            dict(degree=3, taps=(3, 4), seed=(1, 0, 0)),
            dict(degree=3, taps=(3,), seed=(1, 0)),
            dict(degree=3, taps=(3,), seed=(1, 2, 0)),
        ],
    )
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ValueError):
            LfsrSpec(**kwargs)

    @pytest.mark.parametrize("m", sorted(PRIMITIVE_TAPS))
    def test_period_over_two_cycles(self, m):
        spec = default_lfsr(m)
        n = 2**m - 1
        bits, first_return = _lfsr_bits(spec, 2 * n)
        assert first_return == n
        assert np.array_equal(bits[:n], bits[n:])

    @pytest.mark.parametrize("m", sorted(PRIMITIVE_TAPS))
    def test_balance(self, m):
        chips = generate_m_sequence(default_lfsr(m)).chips
        assert np.sum(chips == -1) == 2 ** (m - 1)
        assert np.sum(chips == 1) == 2 ** (m - 1) - 1

    @pytest.mark.parametrize("m", sorted(PRIMITIVE_TAPS))
    def test_two_valued_autocorrelation(self, m):
        code = generate_m_sequence(default_lfsr(m))
        acf = autocorrelation(code)
        assert acf[0] == 2**m - 1
        assert np.all(acf[1:] == -1)

    def test_autocorrelation_matches_direct_sum_for_m3(self):
        code = generate_m_sequence(default_lfsr(3))
        chips = code.chips.tolist()
        for lag in range(7):
            assert periodic_correlation(code, code, lag) == brute_force_correlation(chips, chips, lag)

    @settings(max_examples=30, deadline=None)
    @given(m=st.integers(2, 8), data=st.data())
    def test_seed_changes_only_the_phase(self, m, data):
        seed_a = data.draw(st.lists(st.integers(0, 1), min_size=m, max_size=m).filter(any))
        seed_b = data.draw(st.lists(st.integers(0, 1), min_size=m, max_size=m).filter(any))
        a = generate_m_sequence(default_lfsr(m, seed_a)).chips
        b = generate_m_sequence(default_lfsr(m, seed_b)).chips
        assert any(np.array_equal(np.roll(a, k), b) for k in range(a.size))


class TestWalsh:
    def test_order_one(self):
        (code,) = walsh_hadamard_set(1)
        assert code.chips.tolist() == [1]

    def test_order_two(self):
        codes = walsh_hadamard_set(2)
        assert [c.chips.tolist() for c in codes] == [[1, 1], [1, -1]]

    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64])
    def test_gram_is_scaled_identity(self, n):
        W = np.stack([c.chips for c in walsh_hadamard_set(n)]).astype(int)
        assert np.array_equal(W @ W.T, n * np.eye(n, dtype=int))

    @pytest.mark.parametrize("n", [4, 16, 64])
    def test_matches_sylvester_reference(self, n):
        W = np.stack([c.chips for c in walsh_hadamard_set(n)])
        assert np.array_equal(W, hadamard(n))

    @pytest.mark.parametrize("n", [0, 3, 6, 12])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(NotPowerOfTwoError):
            walsh_hadamard_set(n)

    def test_distinct_codes_are_orthogonal(self):
        codes = walsh_hadamard_set(4)
        for i in range(4):
            for j in range(4):
                if i != j:
                    assert periodic_correlation(codes[i], codes[j], 0) == 0


class TestSpreadingCode:
    def test_self_correlation_is_length(self):
        for code in walsh_hadamard_set(8) + [generate_m_sequence(default_lfsr(5))]:
            assert periodic_correlation(code, code, 0) == code.length

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            periodic_correlation(walsh_hadamard_set(4)[0], walsh_hadamard_set(8)[0], 0)

    def test_lag_out_of_range(self):
        code = walsh_hadamard_set(4)[1]
        with pytest.raises(ValueError):
            periodic_correlation(code, code, 4)

    @pytest.mark.parametrize(
        "chips, family, index",
        [([1, 0, 1], "mseq", 0), ([1, 1, 1, 1], "mseq", 0), ([1, -1, 1], "walsh", 0), ([1, -1], "walsh", 2)],
    )
    def test_invariants(self, chips, family, index):
        with pytest.raises(ValueError):
            SpreadingCode(chips, family, index)

    def test_chips_are_read_only(self):
        code = walsh_hadamard_set(4)[2]
        with pytest.raises(ValueError):
            code.chips[0] = 5

    def test_report_lists_every_degree(self):
        report = code_report()
        for m in range(2, 11):
            assert f"m={m}" in report
        assert "max_offpeak_acf" in report.splitlines()[0]
