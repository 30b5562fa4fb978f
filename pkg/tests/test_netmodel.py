import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from butterfly_dof.errors import ConfigurationError, ShapeError
from butterfly_dof.netmodel import (
    FIRST_HOP_LINKS,
    SECOND_HOP_LINKS,
    ChannelRealization,
    MessageSet,
    Topology,
    co_located_destination,
    co_located_source,
    complex_noise,
    first_hop,
    sample_channels,
    second_hop,
)

from conftest import rand_complex

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def naive_first_hop(ch, x):
    """Straight transcription of the three relay equations."""
    h = ch.first
    return {
        1: h(1, 1) * x[0] + h(4, 1) * x[3],
        2: h(1, 2) * x[0] + h(2, 2) * x[1] + h(3, 2) * x[2] + h(4, 2) * x[3],
        3: h(2, 3) * x[1] + h(3, 3) * x[2],
    }


def naive_second_hop(ch, xr):
    h = ch.second
    return {
        1: h(2, 1) * xr[2] + h(3, 1) * xr[3],
        2: h(1, 2) * xr[1] + h(2, 2) * xr[2],
        3: h(1, 3) * xr[1] + h(2, 3) * xr[2],
        4: h(2, 4) * xr[2] + h(3, 4) * xr[3],
    }


class TestTopology:
    def test_link_sets(self, single):
        assert set(single.first_hop_links) == {(1, 1), (4, 1), (1, 2), (2, 2), (3, 2), (4, 2), (2, 3), (3, 3)}
        assert set(single.second_hop_links) == {(1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 4)}

    def test_mimo_only_drops_side_relays(self):
        topo = Topology.mimo_only(3)
        assert topo.relays == (2,)
        assert all(k == 2 for _, k in topo.first_hop_links)
        assert all(k == 2 for k, _ in topo.second_hop_links)

    @pytest.mark.parametrize("text,expected", [
        ("single", Topology.single()),
        ("mimo:3", Topology.mimo(3)),
        ("mimo", Topology.mimo(3)),
        ("mimo-only:2", Topology.mimo_only(2)),
    ])
    def test_parse(self, text, expected):
        assert Topology.parse(text) == expected

    @pytest.mark.parametrize("text", ["ring", "single:3", "mimo:0"])
    def test_parse_rejects(self, text):
        with pytest.raises(ConfigurationError):
            Topology.parse(text)


class TestSampleChannels:
    def test_single_bounds_and_count(self, single):
        ch = sample_channels(single, 7, 0.5, 2.0)
        coeffs = ch.coefficients()
        assert coeffs.shape == (16,)
        assert np.all(np.abs(coeffs) > 0.5) and np.all(np.abs(coeffs) < 2.0)

    def test_deterministic(self, single):
        a = sample_channels(single, 7, 0.5, 2.0)
        b = sample_channels(single, 7, 0.5, 2.0)
        assert a == b
        assert a.coefficients().tobytes() == b.coefficients().tobytes()

    def test_seed_changes_draw(self, single):
        assert sample_channels(single, 7) != sample_channels(single, 8)

    def test_mimo_shapes(self, mimo3):
        ch = sample_channels(mimo3, 7, 0.5, 2.0)
        assert ch.first(1, 2).shape == (3,)
        assert ch.second(2, 4).shape == (3,)
        assert isinstance(ch.first(1, 1), complex)
        assert isinstance(ch.second(3, 1), complex)

    @pytest.mark.parametrize("h_min,h_max", [(0.0, 1.0), (-1.0, 1.0), (2.0, 2.0), (3.0, 1.0)])
    def test_invalid_bounds(self, single, h_min, h_max):
        with pytest.raises(ConfigurationError):
            sample_channels(single, 1, h_min, h_max)

    def test_absent_link_unreadable(self, ch):
        with pytest.raises(ConfigurationError):
            ch.first(2, 1)
        with pytest.raises(ConfigurationError):
            ch.second(1, 1)

    def test_immutable(self, ch):
        with pytest.raises(ValueError):
            ch.first_links[(1, 2)][0] = 0
        with pytest.raises(TypeError):
            ch.first_links[(1, 2)] = np.array([1.0])
        with pytest.raises(AttributeError):
            ch.h_min = 0.1

    def test_distribution_moments(self, single):
        # uniform magnitude on (0.5, 2) has mean 1.25; phases uniform
        mags, phases = [], []
        for s in range(300):
            c = sample_channels(single, s).coefficients()
            mags.append(np.abs(c))
            phases.append(np.angle(c))
        mags = np.concatenate(mags)
        assert abs(mags.mean() - 1.25) < 0.02
        assert abs(np.mean(np.exp(1j * np.concatenate(phases)))) < 0.03

    def test_out_of_bounds_coefficient_rejected(self, ones):
        with pytest.raises(ConfigurationError):
            ones.with_coefficients(first={(1, 2): [3.0]})


class TestPropagation:
    def test_unit_channels(self, ones):
        y = first_hop(ones, [1, 1, 1, 1])
        assert (y[1], y[2], y[3]) == (2, 4, 2)

    def test_zero_input_returns_noise(self, ch):
        z = {1: 0.3 + 0.1j, 2: -1.2j, 3: 0.7}
        y = first_hop(ch, np.zeros(4), z)
        assert all(y[k] == z[k] for k in (1, 2, 3))

    def test_first_hop_matches_naive(self, ch):
        rng = np.random.default_rng(0)
        x = rand_complex(rng, 4)
        fast, slow = first_hop(ch, x), naive_first_hop(ch, x)
        for k in (1, 2, 3):
            assert fast[k] == pytest.approx(slow[k], rel=1e-14)

    def test_frames(self, ch):
        rng = np.random.default_rng(1)
        x = rand_complex(rng, 4, 16)
        y = first_hop(ch, x)
        for m in range(16):
            ref = naive_first_hop(ch, x[:, m])
            for k in (1, 2, 3):
                assert y[k][m] == pytest.approx(ref[k], rel=1e-14)

    def test_second_hop_unit(self, ones):
        y = second_hop(ones, {1: 1, 2: 1, 3: 1})
        assert all(y[i] == 2 for i in (1, 2, 3, 4))

    def test_second_hop_zero_relay(self, ch):
        z = {i: complex(i, -i) for i in (1, 2, 3, 4)}
        y = second_hop(ch, {1: 0, 2: 0, 3: 0}, z)
        assert all(y[i] == z[i] for i in z)

    def test_second_hop_matches_naive(self, ch):
        rng = np.random.default_rng(2)
        xr = dict(zip((1, 2, 3), rand_complex(rng, 3)))
        fast, slow = second_hop(ch, xr), naive_second_hop(ch, xr)
        for i in (1, 2, 3, 4):
            assert fast[i] == pytest.approx(slow[i], rel=1e-14)

    def test_mimo_first_hop_vector(self, ch3):
        rng = np.random.default_rng(3)
        x = rand_complex(rng, 4)
        y = first_hop(ch3, x)
        ref = sum(ch3.first(i, 2) * x[i - 1] for i in (1, 2, 3, 4))
        assert y[2].shape == (3,)
        np.testing.assert_allclose(y[2], ref, rtol=1e-14)

    def test_mimo_only_second_hop(self):
        ch = sample_channels(Topology.mimo_only(3), 4)
        x = np.array([1.0, -2.0j, 0.5])
        y = second_hop(ch, {2: x})
        assert y[1] == pytest.approx(ch.second(2, 1) @ x, rel=1e-14)

    @pytest.mark.parametrize("bad", [np.ones(3), np.ones((5, 2))])
    def test_first_hop_shape_error(self, ch, bad):
        with pytest.raises(ShapeError):
            first_hop(ch, bad)

    def test_noise_shape_error(self, ch):
        with pytest.raises(ShapeError):
            first_hop(ch, np.ones(4), {1: 0, 2: 0})
        with pytest.raises(ShapeError):
            second_hop(ch, {1: 1, 2: 1})
        with pytest.raises(ShapeError):
            second_hop(sample_channels(Topology.mimo(3), 1), {1: 1, 2: np.ones(2), 3: 1})


class TestProperties:
    @settings(max_examples=50, deadline=None)
    @given(seed=seeds, a=st.complex_numbers(max_magnitude=10), b=st.complex_numbers(max_magnitude=10),
           mimo=st.booleans())
    def test_linearity(self, seed, a, b, mimo):
        topo = Topology.mimo(3) if mimo else Topology.single()
        ch = sample_channels(topo, seed)
        rng = np.random.default_rng(seed)
        x, x2 = rand_complex(rng, 4), rand_complex(rng, 4)
        lhs = first_hop(ch, a * x + b * x2)
        y1, y2 = first_hop(ch, x), first_hop(ch, x2)
        scale = 1 + abs(a) + abs(b)
        for k in lhs:
            np.testing.assert_allclose(lhs[k], a * y1[k] + b * y2[k], atol=1e-12 * scale * 20)

        xr = {k: rand_complex(rng, topo.antennas(k)).squeeze() for k in topo.relays}
        xr2 = {k: rand_complex(rng, topo.antennas(k)).squeeze() for k in topo.relays}
        lhs = second_hop(ch, {k: a * xr[k] + b * xr2[k] for k in xr})
        y1, y2 = second_hop(ch, xr), second_hop(ch, xr2)
        for i in lhs:
            np.testing.assert_allclose(lhs[i], a * y1[i] + b * y2[i], atol=1e-12 * scale * 20)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_no_leakage(self, seed):
        ch = sample_channels(Topology.single(), seed)
        rng = np.random.default_rng(seed)
        x = rand_complex(rng, 4)
        base = first_hop(ch, x)
        for src in (1, 2, 3, 4):
            changed = x.copy()
            changed[src - 1] = 0
            y = first_hop(ch, changed)
            for k in (1, 2, 3):
                if (src, k) not in FIRST_HOP_LINKS:
                    assert y[k] == base[k]
        xr = dict(zip((1, 2, 3), rand_complex(rng, 3)))
        base = second_hop(ch, xr)
        for relay in (1, 2, 3):
            y = second_hop(ch, {**xr, relay: 0})
            for i in (1, 2, 3, 4):
                if (relay, i) not in SECOND_HOP_LINKS:
                    assert y[i] == base[i]

    def test_power_accounting(self):
        z = complex_noise(11, "S1", 20000)
        assert abs(np.mean(np.abs(z) ** 2) - 1.0) < 0.05
        P = 100.0
        x = np.sqrt(P) * complex_noise(11, "S2", 20000)
        assert abs(np.mean(np.abs(x) ** 2) / P - 1.0) < 0.05

    def test_noise_reproducible(self):
        a = complex_noise(5, "R2", (3, 100), start_slot=200)
        b = complex_noise(5, "R2", (3, 100), start_slot=200)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, complex_noise(5, "R1", (3, 100), start_slot=200))


class TestCoLocation:
    @pytest.mark.parametrize("dest,src", [(1, 3), (3, 1), (2, 4), (4, 2)])
    def test_table(self, dest, src):
        assert co_located_source(dest) == src
        assert co_located_destination(src) == dest

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            co_located_source(5)


class TestSerialization:
    @pytest.mark.parametrize("topo", [Topology.single(), Topology.mimo(3), Topology.mimo_only(3)])
    def test_round_trip_exact(self, topo):
        ch = sample_channels(topo, 123)
        text = ch.to_json()
        back = ChannelRealization.from_json(text)
        assert back == ch
        assert back.coefficients().tobytes() == ch.coefficients().tobytes()
        assert back.to_json() == text

    def test_keys(self, ch3):
        data = json.loads(ch3.to_json())
        assert data["variant"] == "MultiAntennaRelay"
        assert data["coefficients"]["S1->R1"] == [ch3.first(1, 1).real, ch3.first(1, 1).imag]
        assert len(data["coefficients"]["R2->D3"]) == 3

    def test_seventeen_digit_strings_round_trip(self, ch):
        data = ch.to_dict()
        for key, value in data["coefficients"].items():
            reparsed = [float(format(v, ".17g")) for v in value]
            assert reparsed == value


class TestMessageSet:
    def test_from_strings(self):
        msgs = MessageSet.from_strings(["1010", "0000", "0110", "1111"])
        assert msgs[1].tolist() == [1, 0, 1, 0]
        assert msgs.lengths == (4, 4, 4, 4)

    def test_random_deterministic(self):
        assert all(np.array_equal(a, b) for a, b in zip(MessageSet.random(64, 3).bits, MessageSet.random(64, 3).bits))

    def test_rejects_non_bits(self):
        with pytest.raises(ConfigurationError):
            MessageSet.from_strings(["102", "000", "000", "000"])
