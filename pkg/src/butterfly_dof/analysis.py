"""Rate sweeps, DoF slope fits, genie-aided cut bounds and cancellation checks."""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import beamform, schemes
from .errors import (
    ConfigurationError,
    DegenerateChannelError,
    EstimationError,
    InvalidCutError,
)
from .netmodel import (
    DESTINATIONS,
    SOURCES,
    ChannelRealization,
    Topology,
    co_located_destination,
    co_located_source,
    sample_channels,
    second_hop,
)
from .rates import rate, sinr

__all__ = [
    "sinr",
    "rate",
    "SCHEMES",
    "RatePoint",
    "DofEstimate",
    "GenieCut",
    "GenieBound",
    "dof_slope",
    "scheme_rates",
    "rate_sweep",
    "default_topology",
    "sample_usable",
    "butterfly_cut",
    "genie_cutset_bound",
    "monte_carlo_residual",
    "MIN_FIT_POWER",
]

log = logging.getLogger(__name__)

SCHEMES = ("no_cache", "cache", "cache_partial", "mimo", "mimo_no_side")

# Points below this power are dropped from slope fits.
MIN_FIT_POWER = 1e4
MIN_SPAN_DB = 40.0


@dataclass(frozen=True)
class RatePoint:
    P: float
    rates: tuple[float, float, float, float]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if len(rates) != 4 or any(r < 0 for r in rates):
            raise ConfigurationError(f"need four nonnegative rates, got {rates}")
        object.__setattr__(self, "rates", rates)

    @property
    def sum_rate(self) -> float:
        return math.fsum(self.rates)


@dataclass(frozen=True)
class DofEstimate:
    """Least-squares fit of rate against ``log2(P)``."""

    slopes: tuple[float, ...]
    total: float
    intercepts: tuple[float, ...]
    total_intercept: float
    r2: float
    grid: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "slopes": list(self.slopes),
            "total": self.total,
            "r2": self.r2,
            "grid": list(self.grid),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xc = x - x.mean()
    yc = y - y.mean()
    slope = float(xc @ yc / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(np.sum((yc - slope * xc) ** 2))
    ss_tot = float(yc @ yc)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return slope, intercept, r2


def dof_slope(points: Sequence[RatePoint], min_power: float | None = None,
              min_span_db: float = MIN_SPAN_DB) -> DofEstimate:
    """Fit per-user and sum-rate slopes against ``log2(P)``.

    Parameters
    ----------
    points : sequence of RatePoint
        Sorted by strictly increasing power.
    min_power : float, optional
        Drop points below this power before fitting.
    min_span_db : float
        Minimum power span of the fitted points.
    """
    pts = [pt for pt in points if min_power is None or pt.P >= min_power]
    if len(pts) < 3:
        raise EstimationError(f"need at least 3 points to fit a slope, got {len(pts)}")
    P = np.array([pt.P for pt in pts], dtype=float)
    if np.any(P <= 0) or np.any(np.diff(P) <= 0):
        raise EstimationError("powers must be positive and strictly increasing")
    span = 10.0 * math.log10(P[-1] / P[0])
    if span < min_span_db - 1e-9:
        raise EstimationError(f"power grid spans {span:.1f} dB, need {min_span_db:.0f} dB")
    x = np.log2(P)
    R = np.array([pt.rates for pt in pts])
    fits = [_ols(x, R[:, i]) for i in range(4)]
    total, total_icpt, r2 = _ols(x, R.sum(axis=1))
    return DofEstimate(
        slopes=tuple(f[0] for f in fits),
        total=total,
        intercepts=tuple(f[1] for f in fits),
        total_intercept=total_icpt,
        r2=r2,
        grid=tuple(float(p) for p in P),
    )


# ----------------------------------------------------------------------
# scheme dispatch

def default_topology(scheme: str) -> Topology:
    if scheme in ("no_cache", "cache", "cache_partial"):
        return Topology.single()
    if scheme == "mimo":
        return Topology.mimo(3)
    if scheme == "mimo_no_side":
        return Topology.mimo_only(3)
    raise ConfigurationError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


def scheme_rates(scheme: str, ch: ChannelRealization, P: float, p: float | None = None) -> dict[int, float]:
    """Per-user rates of a named scheme at power ``P``."""
    if scheme == "no_cache":
        return schemes.no_cache_scheme(ch, P).rates
    if scheme == "cache":
        return schemes.run_cache_scheme(ch, P).rates
    if scheme == "cache_partial":
        if p is None:
            raise ConfigurationError("cache_partial needs a cached fraction p")
        return schemes.time_share(p, schemes.no_cache_scheme(ch, P), schemes.run_cache_scheme(ch, P), P)
    if scheme == "mimo":
        return beamform.run_mimo_scheme(ch, P, use_side_relays=True).rates
    if scheme == "mimo_no_side":
        return beamform.run_mimo_scheme(ch, P, use_side_relays=False).rates
    raise ConfigurationError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


def rate_sweep(scheme: str, ch: ChannelRealization, powers: Iterable[float],
               p: float | None = None) -> list[RatePoint]:
    out = []
    for P in powers:
        r = scheme_rates(scheme, ch, P, p)
        out.append(RatePoint(float(P), tuple(r[i] for i in DESTINATIONS)))
    return out


def sample_usable(scheme: str, topology: Topology, seed: int, h_min: float = 0.5, h_max: float = 2.0,
                  max_retries: int = 10) -> ChannelRealization:
    """Sample channels, redrawing (with a warning) while the scheme hits a degenerate realization."""
    for attempt in range(max_retries + 1):
        s = seed if attempt == 0 else int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
        ch = sample_channels(topology, s, h_min, h_max)
        try:
            scheme_rates(scheme, ch, 1.0, p=0.5 if scheme == "cache_partial" else None)
        except DegenerateChannelError as exc:
            log.warning("seed %d gives a degenerate channel (%s); resampling", s, exc)
            continue
        return ch
    raise DegenerateChannelError(f"no usable channel for seed {seed} after {max_retries} resamples")


# ----------------------------------------------------------------------
# genie-aided cut bound

def _node_exists(topology: Topology, node: str) -> bool:
    kind, idx = node[:1], node[1:]
    if not idx.isdigit():
        return False
    n = int(idx)
    if kind in ("S", "D"):
        return n in SOURCES
    if kind == "R":
        return n in topology.relays
    return False


def _expand(group: frozenset[str]) -> set[str]:
    """A two-way terminal is a source together with its co-located destination."""
    out = set(group)
    for node in group:
        if node.startswith("S"):
            out.add(f"D{co_located_destination(int(node[1:]))}")
        elif node.startswith("D"):
            out.add(f"S{co_located_source(int(node[1:]))}")
    return out


def _link_graph(topology: Topology) -> dict[str, set[str]]:
    graph: dict[str, set[str]] = {}
    for i, k in topology.first_hop_links:
        graph.setdefault(f"S{i}", set()).add(f"R{k}")
    for k, i in topology.second_hop_links:
        graph.setdefault(f"R{k}", set()).add(f"D{i}")
    for d in DESTINATIONS:
        # co-located terminals share everything they receive
        graph.setdefault(f"D{d}", set()).add(f"S{co_located_source(d)}")
    return graph


def _reachable(graph: dict[str, set[str]], start: set[str], blocked: set[str]) -> set[str]:
    seen = set(start)
    queue = deque(start)
    while queue:
        node = queue.popleft()
        for nxt in graph.get(node, ()):
            if nxt not in seen and nxt not in blocked:
                seen.add(nxt)
                queue.append(nxt)
    return seen


@dataclass(frozen=True)
class GenieCut:
    """Two node groups that share messages via a genie and talk only through ``bridge``."""

    left: frozenset[str]
    right: frozenset[str]
    bridge: frozenset[str]

    def __post_init__(self):
        for name in ("left", "right", "bridge"):
            object.__setattr__(self, name, frozenset(n.strip().upper() for n in getattr(self, name)))

    @classmethod
    def of(cls, left: Iterable[str], right: Iterable[str], bridge: Iterable[str]) -> "GenieCut":
        return cls(frozenset(left), frozenset(right), frozenset(bridge))

    def antennas(self, topology: Topology, group: str) -> int:
        return sum(topology.antennas(int(n[1:])) if n.startswith("R") else 1
                   for n in getattr(self, group))

    def validate(self, topology: Topology) -> None:
        if not self.bridge:
            raise InvalidCutError("bridge is empty")
        if not self.left or not self.right:
            raise InvalidCutError("both node groups must be nonempty")
        for node in self.left | self.right | self.bridge:
            if not _node_exists(topology, node):
                raise InvalidCutError(f"node {node} is not in topology {topology.label}")
        if any(not n.startswith("R") for n in self.bridge):
            raise InvalidCutError("bridge nodes must be relays")
        left, right = _expand(self.left), _expand(self.right)
        if left & right or (left | right) & self.bridge:
            raise InvalidCutError("groups and bridge must be disjoint")
        graph = _link_graph(topology)
        if _reachable(graph, left, set(self.bridge)) & right:
            raise InvalidCutError("left group reaches the right group without the bridge")
        if _reachable(graph, right, set(self.bridge)) & left:
            raise InvalidCutError("right group reaches the left group without the bridge")


@dataclass(frozen=True)
class GenieBound:
    forward: int
    reverse: int
    left_antennas: int
    right_antennas: int
    bridge_antennas: int

    @property
    def total(self) -> int:
        return self.forward + self.reverse

    def to_dict(self) -> dict:
        return {
            "forward": self.forward,
            "reverse": self.reverse,
            "total": self.total,
            "left_antennas": self.left_antennas,
            "right_antennas": self.right_antennas,
            "bridge_antennas": self.bridge_antennas,
        }


def butterfly_cut(topology: Topology | None = None) -> GenieCut:
    """The cut isolating the center relay: {S1, R1, S4} versus {S2, R3, S3}."""
    topology = topology or Topology.single()
    if 1 in topology.relays:
        return GenieCut.of({"S1", "R1", "S4"}, {"S2", "R3", "S3"}, {"R2"})
    return GenieCut.of({"S1", "S4"}, {"S2", "S3"}, {"R2"})


def _rank(M: np.ndarray, tol: float) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0


def _bridge_antennas(ch: ChannelRealization, bridge) -> list[tuple[int, int]]:
    return [(k, a) for k in sorted(int(n[1:]) for n in bridge) for a in range(ch.topology.antennas(k))]


def _directed_bound(ch: ChannelRealization, tx_group: set[str], rx_group: set[str],
                    bridge, tol: float) -> int:
    ants = _bridge_antennas(ch, bridge)
    senders = sorted(int(n[1:]) for n in tx_group if n.startswith("S"))
    receivers = sorted(int(n[1:]) for n in rx_group if n.startswith("D"))
    h_in = np.zeros((len(ants), len(senders)), dtype=complex)
    for col, s in enumerate(senders):
        for row, (k, a) in enumerate(ants):
            if (s, k) in ch.first_links:
                h_in[row, col] = ch.first_vec(s, k)[a]
    h_out = np.zeros((len(receivers), len(ants)), dtype=complex)
    for row, d in enumerate(receivers):
        for col, (k, a) in enumerate(ants):
            if (k, d) in ch.second_links:
                h_out[row, col] = ch.second_vec(k, d)[a]
    return min(_rank(h_in, tol), _rank(h_out, tol))


def genie_cutset_bound(cut: GenieCut, ch: ChannelRealization, tol: float = beamform.RANK_TOL) -> GenieBound:
    """Sum-DoF upper bound of a genie cut from channel ranks across the bridge.

    Each direction is limited by the rank of the channel from the sending
    group's sources into the bridge antennas and by the rank from the bridge
    antennas to the receiving group's destinations.
    """
    cut.validate(ch.topology)
    left, right = _expand(cut.left), _expand(cut.right)
    fwd = _directed_bound(ch, left, right, cut.bridge, tol)
    rev = _directed_bound(ch, right, left, cut.bridge, tol)
    bridge_ants = sum(ch.topology.antennas(int(n[1:])) for n in cut.bridge)
    return GenieBound(fwd, rev, cut.antennas(ch.topology, "left"), cut.antennas(ch.topology, "right"),
                      bridge_ants)


# ----------------------------------------------------------------------
# Monte Carlo cancellation check

def _trial_seeds(seed: int, n_trials: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_trials)]


def _unwanted(dest: int) -> tuple[int, ...]:
    return tuple(s for s in SOURCES if s not in (dest, co_located_source(dest)))


def _cache_trial(ch: ChannelRealization) -> float:
    bf = schemes.cache_beamformers(ch)
    worst = 0.0
    for stream, coef in (("A", bf.a), ("B", bf.b)):
        y = second_hop(ch, {k: np.array([coef[k]]) for k in ch.topology.relays})
        for d in DESTINATIONS:
            if schemes.CACHE_STREAM[d] != stream:
                worst = max(worst, abs(y[d][0]))
    return worst / (ch.h_max * bf.norm())


def _af_trial(ch: ChannelRealization, relay_gains: dict, active: tuple[int, ...],
              served: tuple[int, ...], norm: float) -> float:
    worst = 0.0
    for s in SOURCES:
        if s not in active:
            continue
        x = np.zeros((4, 2), dtype=complex)
        x[s - 1, 0] = 1.0
        frame = schemes.relay_frame(ch, relay_gains, x)
        for d in served:
            if s in _unwanted(d):
                worst = max(worst, abs(frame.dest_rx[d][1]))
    return worst / norm


def monte_carlo_residual(scheme: str, n_trials: int, seed: int) -> float:
    """Largest relative unwanted-stream coefficient over random channels, noise off.

    Coefficients are read from the destinations' responses to unit impulses
    sent through the actual scheme.  The cache scheme normalizes by
    ``h_max`` times the beamformer norm and the amplify-forward schemes by
    ``h_max**2`` times the relay-gain norm (two hops).
    """
    if n_trials < 1:
        raise ConfigurationError(f"n_trials must be at least 1, got {n_trials}")
    if scheme not in ("no_cache", "cache", "mimo", "mimo_no_side"):
        raise ConfigurationError(f"unknown scheme {scheme!r} for residual check")
    topo = default_topology(scheme)
    worst = 0.0
    for s in _trial_seeds(seed, n_trials):
        ch = sample_usable(scheme, topo, s)
        if scheme == "cache":
            val = _cache_trial(ch)
        elif scheme == "no_cache":
            alpha = schemes.no_cache_gain(ch, 1.0)
            val = _af_trial(ch, {2: alpha}, (1, 3), (1, 3), ch.h_max ** 2 * alpha)
        else:
            sol = beamform.solve_v2(ch, 1.0)
            norm = ch.h_max ** 2 * float(np.linalg.norm(sol.V2))
            val = _af_trial(ch, sol.relay_gains(scheme == "mimo"), SOURCES, DESTINATIONS, norm)
        worst = max(worst, val)
    return worst
