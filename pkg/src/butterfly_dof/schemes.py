"""Single-antenna achievability schemes for the two-way butterfly network.

Three schemes live here:

* :func:`no_cache_scheme` -- only ``S1``, ``R2`` and ``S3`` are active and
  ``R2`` amplifies and forwards the sum it hears, one slot later.  Each of
  ``D1`` and ``D3`` strips the term of its co-located source and is left with
  one clean stream (two streams in total).
* :func:`run_cache_scheme` -- relays hold ``W1 xor W3`` and ``W2 xor W4``
  and transmit two common streams ``A`` and ``B`` with coefficients chosen so
  that each destination hears exactly one of them (four streams in total).
* :func:`time_share` -- mixes the two in proportion to the cached fraction.

Rates are computed from effective coefficients (see :class:`SchemeReport`);
the symbol-level helpers :func:`relay_frame` and :func:`deliver_cached`
exist to verify cancellations and XOR decoding on actual samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateChannelError,
    PlacementError,
    ShapeError,
    UnsupportedSchemeError,
)
from .netmodel import (
    DESTINATIONS,
    SOURCES,
    ChannelRealization,
    MessageSet,
    SymbolFrame,
    co_located_source,
    complex_noise,
    first_hop,
    second_hop,
)
from .rates import rate, sinr

__all__ = [
    "SchemeReport",
    "CachedContent",
    "CacheBeamformers",
    "amplify_forward_response",
    "relay_frame",
    "no_cache_scheme",
    "cache_placement",
    "cache_beamformers",
    "cache_delivery_gains",
    "run_cache_scheme",
    "deliver_cached",
    "time_share",
    "DEGENERATE_GAIN_TOL",
]

# Desired gains below this fraction of h_max are treated as a degenerate channel.
DEGENERATE_GAIN_TOL = 1e-9

# Stream carried to each destination by the cache scheme.
CACHE_STREAM = MappingProxyType({1: "A", 2: "B", 3: "A", 4: "B"})


@dataclass(frozen=True)
class SchemeReport:
    """Effective per-destination coefficients of a scheme at one power level.

    The signal decoded at destination ``D_i`` is modeled as::

        gains[i] * s_i + sum_j residuals[i][j] * s_j + forwarded relay noise + Z_i

    where every stream ``s`` has variance ``stream_power`` and the forwarded
    relay noise has variance ``forwarded_noise[i]``.  ``served`` lists the
    destinations that decode anything; the others get zero rate.
    """

    scheme: str
    P: float
    gains: Mapping[int, complex]
    residuals: Mapping[int, tuple[complex, ...]]
    forwarded_noise: Mapping[int, float]
    stream_power: float
    served: frozenset[int]
    active: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "gains", MappingProxyType({i: complex(g) for i, g in self.gains.items()}))
        object.__setattr__(self, "residuals", MappingProxyType(
            {i: tuple(complex(r) for r in rs) for i, rs in self.residuals.items()}))
        object.__setattr__(self, "forwarded_noise", MappingProxyType(
            {i: float(v) for i, v in self.forwarded_noise.items()}))
        object.__setattr__(self, "served", frozenset(self.served))
        object.__setattr__(self, "active", frozenset(self.active))

    @property
    def noise_amp(self) -> dict[int, float]:
        """Total noise variance at each destination (forwarded plus its own)."""
        return {i: self.forwarded_noise[i] + 1.0 for i in DESTINATIONS}

    @property
    def residual_max(self) -> float:
        vals = [abs(r) for i in self.served for r in self.residuals[i]]
        return max(vals, default=0.0)

    @property
    def rates(self) -> dict[int, float]:
        out = {}
        for i in DESTINATIONS:
            if i not in self.served:
                out[i] = 0.0
                continue
            out[i] = rate(sinr(self.gains[i], self.residuals[i], self.forwarded_noise[i], self.stream_power))
        return out

    @property
    def sum_rate(self) -> float:
        return sum(self.rates.values())

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "gains": {f"D{i}": [float(g.real), float(g.imag)] for i, g in sorted(self.gains.items())},
            "residual_max": float(self.residual_max),
            "noise_amp": {f"D{i}": float(v) for i, v in sorted(self.noise_amp.items())},
            "rates": {f"D{i}": float(v) for i, v in sorted(self.rates.items())},
            "P": float(self.P),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# ----------------------------------------------------------------------
# amplify-and-forward machinery shared with the multi-antenna scheme

def _as_gain(g, n: int) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    if n == 1:
        if g.size != 1:
            raise ShapeError(f"single-antenna relay gain must be scalar, got shape {g.shape}")
        return g.reshape(1, 1)
    if g.shape != (n, n):
        raise ShapeError(f"relay gain must be {n}x{n}, got shape {g.shape}")
    return g


def amplify_forward_response(ch: ChannelRealization, relay_gains: Mapping[int, object]):
    """End-to-end source-to-destination coefficients of a linear relay network.

    ``relay_gains`` maps a relay index to its scalar or matrix gain; relays
    not listed are silent and their channels are never read.

    Returns
    -------
    coeff : dict
        ``coeff[d][s]`` is the coefficient of ``X_s`` (delayed one slot) at ``D_d``.
    noise : dict
        ``noise[d]`` is the variance of relay noise forwarded to ``D_d``.
    """
    topo = ch.topology
    gains = {k: _as_gain(g, topo.antennas(k)) for k, g in relay_gains.items()}
    coeff = {d: {s: 0j for s in SOURCES} for d in DESTINATIONS}
    noise = {d: 0.0 for d in DESTINATIONS}
    for d in DESTINATIONS:
        for k in topo.relays_heard_by(d):
            if k not in gains:
                continue
            row = ch.second_vec(k, d) @ gains[k]
            noise[d] += float(np.vdot(row, row).real)
            for s in topo.sources_heard_by(k):
                coeff[d][s] += complex(row @ ch.first_vec(s, k))
    return coeff, noise


def _af_report(scheme: str, ch: ChannelRealization, P: float, relay_gains: Mapping[int, object],
               served, active_sources, active_nodes) -> SchemeReport:
    coeff, noise = amplify_forward_response(ch, relay_gains)
    gains, residuals = {}, {}
    for d in DESTINATIONS:
        if d not in served:
            gains[d] = 0j
            residuals[d] = ()
            continue
        gains[d] = coeff[d][d]
        side = co_located_source(d)
        residuals[d] = tuple(coeff[d][s] if s in active_sources else 0j
                             for s in SOURCES if s not in (d, side))
    return SchemeReport(scheme, P, gains, residuals, noise, P, frozenset(served), frozenset(active_nodes))


def relay_frame(ch: ChannelRealization, relay_gains: Mapping[int, object], x,
                relay_noise: Mapping | None = None, dest_noise: Mapping | None = None) -> SymbolFrame:
    """Propagate a frame of source symbols through one-slot-delay linear relays.

    ``x`` has shape ``(4, T)``.  Relay ``R_k`` transmits
    ``G_k @ Y_{R_k}[m-1]`` in slot ``m`` and nothing in slot 0; relays missing
    from ``relay_gains`` stay silent.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != 4:
        raise ShapeError(f"source frame must have shape (4, T), got {x.shape}")
    topo = ch.topology
    y_r = first_hop(ch, x, relay_noise)
    x_r = {}
    for k in topo.relays:
        n = topo.antennas(k)
        out = np.zeros((n, x.shape[1]), dtype=complex)
        if k in relay_gains:
            g = _as_gain(relay_gains[k], n)
            rx = np.asarray(y_r[k]).reshape(n, -1)
            out[:, 1:] = g @ rx[:, :-1]
        x_r[k] = out[0] if n == 1 else out
    y_d = second_hop(ch, x_r, dest_noise)
    return SymbolFrame(x=x, relay_rx=MappingProxyType(y_r), relay_tx=MappingProxyType(x_r),
                       dest_rx=MappingProxyType(y_d))


def _require_single(ch: ChannelRealization, scheme: str) -> None:
    if ch.topology.is_mimo:
        raise UnsupportedSchemeError(f"{scheme} scheme needs the single-antenna topology, got {ch.topology.label}")


# ----------------------------------------------------------------------
# no caching

def no_cache_gain(ch: ChannelRealization, P: float) -> float:
    """Amplify-forward gain that puts the relay exactly at power ``P``."""
    h1, h3 = ch.first(1, 2), ch.first(3, 2)
    return math.sqrt(P / (abs(h1) ** 2 * P + abs(h3) ** 2 * P + 1.0))


def no_cache_scheme(ch: ChannelRealization, P: float) -> SchemeReport:
    """Two-way 1x1x1 relaying through ``R2``; everyone else is silent."""
    _require_single(ch, "no_cache")
    if not P > 0:
        raise ConfigurationError(f"power must be positive, got {P}")
    alpha = no_cache_gain(ch, P)
    return _af_report("no_cache", ch, P, {2: alpha}, served=(1, 3), active_sources=(1, 3),
                      active_nodes=("S1", "R2", "S3"))


# ----------------------------------------------------------------------
# caching

@dataclass(frozen=True)
class CachedContent:
    """Relay cache contents: the two XOR-combined messages and the cached fraction."""

    w1_xor_w3: np.ndarray
    w2_xor_w4: np.ndarray
    p: float

    @property
    def n_cached(self) -> int:
        return math.floor(self.p * len(self.w1_xor_w3))

    @property
    def cached(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_cached
        return self.w1_xor_w3[:n], self.w2_xor_w4[:n]


def cache_placement(msgs: MessageSet, p: float = 1.0) -> CachedContent:
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"cached fraction must lie in [0, 1], got {p}")
    if len(set(msgs.lengths)) != 1:
        raise PlacementError(f"messages have unequal lengths {msgs.lengths}")
    w1 = np.bitwise_xor(msgs[1], msgs[3])
    w2 = np.bitwise_xor(msgs[2], msgs[4])
    w1.setflags(write=False)
    w2.setflags(write=False)
    return CachedContent(w1, w2, float(p))


@dataclass(frozen=True)
class CacheBeamformers:
    """Unscaled relay coefficients on streams ``A`` and ``B``, keyed by relay."""

    a: Mapping[int, complex]
    b: Mapping[int, complex]

    def relay_power(self, k: int) -> float:
        """Transmit power of ``R_k`` for unit-power streams before scaling."""
        return abs(self.a[k]) ** 2 + abs(self.b[k]) ** 2

    def power_scale(self, P: float) -> float:
        """Common amplitude factor that puts the most loaded relay at power ``P``."""
        return math.sqrt(P / max(self.relay_power(k) for k in self.a))

    def norm(self) -> float:
        return math.sqrt(sum(self.relay_power(k) for k in self.a))


def _ratio(num: complex, den: complex, what: str) -> complex:
    if den == 0:
        raise DegenerateChannelError(f"zero channel {what} in cache beamformer")
    return num / den


def cache_beamformers(ch: ChannelRealization) -> CacheBeamformers:
    _require_single(ch, "cache")
    h = ch.second
    a = {
        1: -_ratio(h(2, 2), h(1, 2), "R1->D2"),
        2: 1 + 0j,
        3: -_ratio(h(2, 4), h(3, 4), "R3->D4"),
    }
    b = {
        1: -_ratio(h(2, 3), h(1, 3), "R1->D3"),
        2: 1 + 0j,
        3: -_ratio(h(2, 1), h(3, 1), "R3->D1"),
    }
    return CacheBeamformers(MappingProxyType(a), MappingProxyType(b))


def cache_stream_response(ch: ChannelRealization, bf: CacheBeamformers) -> dict[int, dict[str, complex]]:
    """Coefficient of stream ``A`` and ``B`` at every destination."""
    out = {}
    for d in DESTINATIONS:
        acc = {"A": 0j, "B": 0j}
        for k in ch.topology.relays_heard_by(d):
            h = ch.second(k, d)
            acc["A"] += h * bf.a[k]
            acc["B"] += h * bf.b[k]
        out[d] = acc
    return out


def cache_delivery_gains(ch: ChannelRealization, P: float = 1.0) -> SchemeReport:
    """Effective gains of the cache scheme; ``gains`` are the unscaled coefficients.

    Relays transmit functions of cached data, so no relay noise reaches the
    destinations.
    """
    bf = cache_beamformers(ch)
    resp = cache_stream_response(ch, bf)
    gains, residuals = {}, {}
    for d in DESTINATIONS:
        wanted = CACHE_STREAM[d]
        other = "B" if wanted == "A" else "A"
        gains[d] = resp[d][wanted]
        residuals[d] = (resp[d][other],)
    stream_power = bf.power_scale(P) ** 2
    return SchemeReport("cache", P, gains, residuals, {d: 0.0 for d in DESTINATIONS}, stream_power,
                        frozenset(DESTINATIONS), frozenset(("R1", "R2", "R3")))


def check_cache_gains(ch: ChannelRealization, report: SchemeReport) -> None:
    for d, g in report.gains.items():
        if abs(g) <= DEGENERATE_GAIN_TOL * ch.h_max:
            raise DegenerateChannelError(f"cache-scheme desired gain at D{d} vanishes (|g|={abs(g):.3g})")


def run_cache_scheme(ch: ChannelRealization, P: float, cache: CachedContent | None = None) -> SchemeReport:
    """Full-cache delivery at power ``P``; all four destinations are served."""
    if cache is not None and cache.p != 1.0:
        raise ConfigurationError(f"cache scheme needs the full messages cached, got p={cache.p}")
    if not P > 0:
        raise ConfigurationError(f"power must be positive, got {P}")
    report = cache_delivery_gains(ch, P)
    check_cache_gains(ch, report)
    return report


_QPSK = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / math.sqrt(2.0)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    padded = np.concatenate([bits, np.zeros(len(bits) % 2, dtype=np.uint8)])
    idx = padded[0::2] + 2 * padded[1::2]
    return _QPSK[idx]


def qpsk_demodulate(symbols: np.ndarray, n_bits: int) -> np.ndarray:
    bits = np.empty(2 * len(symbols), dtype=np.uint8)
    bits[0::2] = symbols.real < 0
    bits[1::2] = symbols.imag < 0
    return bits[:n_bits]


def deliver_cached(ch: ChannelRealization, msgs: MessageSet, P: float = 1.0,
                   noise_seed: int | None = None) -> dict[int, np.ndarray]:
    """Run cache delivery on actual symbols and decode every destination's message.

    The cached XORs are QPSK-modulated into streams ``A`` and ``B``, sent
    through the second hop, equalized with the known effective gain, and
    XOR-ed with the destination's side information.  ``noise_seed=None``
    switches destination noise off.
    """
    cache = cache_placement(msgs, 1.0)
    report = run_cache_scheme(ch, P, cache)
    bf = cache_beamformers(ch)
    c = bf.power_scale(P)
    n_bits = len(cache.w1_xor_w3)
    streams = {"A": qpsk_modulate(cache.w1_xor_w3), "B": qpsk_modulate(cache.w2_xor_w4)}
    x_r = {k: c * (bf.a[k] * streams["A"] + bf.b[k] * streams["B"]) for k in ch.topology.relays}
    noise = None
    if noise_seed is not None:
        noise = {d: complex_noise(noise_seed, f"D{d}", streams["A"].shape) for d in DESTINATIONS}
    y = second_hop(ch, x_r, noise)
    decoded = {}
    for d in DESTINATIONS:
        est = y[d] / (c * report.gains[d])
        xor_bits = qpsk_demodulate(est, n_bits)
        decoded[d] = np.bitwise_xor(xor_bits, msgs[co_located_source(d)])
    return decoded


# ----------------------------------------------------------------------
# partial caching

def time_share(p: float, report_nc: SchemeReport, report_c: SchemeReport, P: float | None = None) -> dict[int, float]:
    """Per-user rates when the cache scheme runs a fraction ``p`` of the time."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"time-sharing fraction must lie in [0, 1], got {p}")
    if P is not None and not (report_nc.P == P == report_c.P):
        raise ConfigurationError("reports were computed at different powers")
    r_nc, r_c = report_nc.rates, report_c.rates
    return {i: (1.0 - p) * r_nc[i] + p * r_c[i] for i in DESTINATIONS}
