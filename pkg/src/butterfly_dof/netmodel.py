"""Two-way butterfly network: topology, random channels and two-hop propagation.

Node naming follows the usual convention: sources ``S1..S4``, relays
``R1..R3`` and destinations ``D1..D4``.  Source ``S_i`` wants to reach
``D_i``; every destination is co-located with one source of the opposite
direction and therefore knows that source's message and symbols.

Channels are stored per link as 1-D complex arrays whose length is the
antenna count of the relay end of the link.  Single-antenna links are
handed out as plain ``complex`` scalars by :meth:`ChannelRealization.first`
and :meth:`ChannelRealization.second`.
"""

from __future__ import annotations

import enum
import json
import zlib
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, ShapeError

__all__ = [
    "Variant",
    "Topology",
    "ChannelRealization",
    "SymbolFrame",
    "MessageSet",
    "FIRST_HOP_LINKS",
    "SECOND_HOP_LINKS",
    "SOURCES",
    "DESTINATIONS",
    "sample_channels",
    "first_hop",
    "second_hop",
    "co_located_source",
    "co_located_destination",
    "intended_source",
    "complex_noise",
    "gaussian_symbols",
]

SOURCES = (1, 2, 3, 4)
DESTINATIONS = (1, 2, 3, 4)

# (source, relay)
FIRST_HOP_LINKS = ((1, 1), (4, 1), (1, 2), (2, 2), (3, 2), (4, 2), (2, 3), (3, 3))
# (relay, destination)
SECOND_HOP_LINKS = ((1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 4))

# destination -> source whose message it already holds
_CO_LOCATED = MappingProxyType({1: 3, 2: 4, 3: 1, 4: 2})

DEFAULT_H_MIN = 0.5
DEFAULT_H_MAX = 2.0


class Variant(enum.Enum):
    SINGLE_ANTENNA_RELAY = "SingleAntennaRelay"
    MULTI_ANTENNA_RELAY = "MultiAntennaRelay"
    MULTI_ANTENNA_RELAY_ONLY = "MultiAntennaRelayOnly"


@dataclass(frozen=True)
class Topology:
    """Butterfly topology, optionally with a multi-antenna center relay.

    Use the constructors :meth:`single`, :meth:`mimo` and :meth:`mimo_only`
    rather than the raw dataclass fields.
    """

    variant: Variant = Variant.SINGLE_ANTENNA_RELAY
    n_antennas: int = 1

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 1:
            raise ConfigurationError(f"n_antennas must be a positive integer, got {self.n_antennas!r}")
        if self.variant is Variant.SINGLE_ANTENNA_RELAY and self.n_antennas != 1:
            raise ConfigurationError("SingleAntennaRelay topology has exactly one antenna at R2")

    @classmethod
    def single(cls) -> "Topology":
        return cls(Variant.SINGLE_ANTENNA_RELAY, 1)

    @classmethod
    def mimo(cls, n_antennas: int = 3) -> "Topology":
        return cls(Variant.MULTI_ANTENNA_RELAY, n_antennas)

    @classmethod
    def mimo_only(cls, n_antennas: int = 3) -> "Topology":
        """Center relay only; side relays R1 and R3 are removed."""
        return cls(Variant.MULTI_ANTENNA_RELAY_ONLY, n_antennas)

    @classmethod
    def parse(cls, text: str) -> "Topology":
        """Parse ``single``, ``mimo:N`` or ``mimo-only:N`` (N defaults to 3)."""
        name, _, count = text.strip().lower().partition(":")
        n = int(count) if count else 3
        if name == "single":
            if count and n != 1:
                raise ConfigurationError("single topology has one antenna at R2")
            return cls.single()
        if name == "mimo":
            return cls.mimo(n)
        if name in ("mimo-only", "mimo_only"):
            return cls.mimo_only(n)
        raise ConfigurationError(f"unknown topology {text!r}")

    @property
    def label(self) -> str:
        if self.variant is Variant.SINGLE_ANTENNA_RELAY:
            return "single"
        if self.variant is Variant.MULTI_ANTENNA_RELAY:
            return f"mimo:{self.n_antennas}"
        return f"mimo-only:{self.n_antennas}"

    @property
    def is_mimo(self) -> bool:
        return self.variant is not Variant.SINGLE_ANTENNA_RELAY

    @property
    def relays(self) -> tuple[int, ...]:
        if self.variant is Variant.MULTI_ANTENNA_RELAY_ONLY:
            return (2,)
        return (1, 2, 3)

    def antennas(self, relay: int) -> int:
        if relay not in self.relays:
            raise ConfigurationError(f"relay R{relay} is not part of topology {self.label}")
        return self.n_antennas if relay == 2 else 1

    @property
    def first_hop_links(self) -> tuple[tuple[int, int], ...]:
        return tuple(link for link in FIRST_HOP_LINKS if link[1] in self.relays)

    @property
    def second_hop_links(self) -> tuple[tuple[int, int], ...]:
        return tuple(link for link in SECOND_HOP_LINKS if link[0] in self.relays)

    def relays_heard_by(self, dest: int) -> tuple[int, ...]:
        return tuple(k for k, i in self.second_hop_links if i == dest)

    def sources_heard_by(self, relay: int) -> tuple[int, ...]:
        return tuple(i for i, k in self.first_hop_links if k == relay)

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, "n_antennas": self.n_antennas}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Topology":
        return cls(Variant(data["variant"]), int(data.get("n_antennas", 1)))


def _first_key(i: int, k: int) -> str:
    return f"S{i}->R{k}"


def _second_key(k: int, i: int) -> str:
    return f"R{k}->D{i}"


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=complex).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One fixed draw of every channel coefficient of both hops.

    ``first_links[(i, k)]`` holds the gain from ``S_i`` to ``R_k`` and
    ``second_links[(k, i)]`` the gain from ``R_k`` to ``D_i``; both are
    read-only arrays with one entry per antenna at ``R_k``.
    """

    topology: Topology
    first_links: Mapping[tuple[int, int], np.ndarray]
    second_links: Mapping[tuple[int, int], np.ndarray]
    h_min: float = DEFAULT_H_MIN
    h_max: float = DEFAULT_H_MAX
    seed: int | None = None

    def __post_init__(self):
        _check_bounds(self.h_min, self.h_max)
        first = {tuple(key): _frozen(val) for key, val in self.first_links.items()}
        second = {tuple(key): _frozen(val) for key, val in self.second_links.items()}
        topo = self.topology
        if set(first) != set(topo.first_hop_links):
            raise ShapeError(f"first-hop links {sorted(first)} do not match topology {topo.label}")
        if set(second) != set(topo.second_hop_links):
            raise ShapeError(f"second-hop links {sorted(second)} do not match topology {topo.label}")
        for (i, k), h in first.items():
            self._check_link(_first_key(i, k), h, topo.antennas(k))
        for (k, i), h in second.items():
            self._check_link(_second_key(k, i), h, topo.antennas(k))
        object.__setattr__(self, "first_links", MappingProxyType(first))
        object.__setattr__(self, "second_links", MappingProxyType(second))

    def _check_link(self, name: str, h: np.ndarray, n: int) -> None:
        if h.shape != (n,):
            raise ShapeError(f"{name} has {h.size} entries, expected {n}")
        mag = np.abs(h)
        if not (np.all(mag > self.h_min) and np.all(mag < self.h_max)):
            raise ConfigurationError(
                f"{name} magnitude {mag} outside ({self.h_min}, {self.h_max})"
            )

    # ------------------------------------------------------------------
    # construction helpers
    @classmethod
    def from_coefficients(cls, topology: Topology, first: Mapping, second: Mapping,
                          h_min: float = DEFAULT_H_MIN, h_max: float = DEFAULT_H_MAX,
                          seed: int | None = None) -> "ChannelRealization":
        return cls(topology, dict(first), dict(second), h_min, h_max, seed)

    @classmethod
    def constant(cls, topology: Topology, value: complex = 1.0,
                 h_min: float = DEFAULT_H_MIN, h_max: float = DEFAULT_H_MAX) -> "ChannelRealization":
        """Every coefficient equal to ``value`` (a degenerate, symmetric channel)."""
        first = {(i, k): np.full(topology.antennas(k), value) for i, k in topology.first_hop_links}
        second = {(k, i): np.full(topology.antennas(k), value) for k, i in topology.second_hop_links}
        return cls(topology, first, second, h_min, h_max)

    def with_coefficients(self, first: Mapping | None = None, second: Mapping | None = None,
                          h_min: float | None = None, h_max: float | None = None) -> "ChannelRealization":
        """Copy with some coefficients (and optionally the bounds) replaced."""
        new_first = dict(self.first_links)
        new_first.update(first or {})
        new_second = dict(self.second_links)
        new_second.update(second or {})
        return ChannelRealization(
            self.topology, new_first, new_second,
            self.h_min if h_min is None else h_min,
            self.h_max if h_max is None else h_max,
            self.seed,
        )

    def without_side_relays(self) -> "ChannelRealization":
        """Same center-relay channels on the topology with R1 and R3 removed."""
        if not self.topology.is_mimo:
            raise ConfigurationError("side relays can only be removed from a multi-antenna topology")
        topo = Topology.mimo_only(self.topology.n_antennas)
        first = {key: h for key, h in self.first_links.items() if key[1] == 2}
        second = {key: h for key, h in self.second_links.items() if key[0] == 2}
        return ChannelRealization(topo, first, second, self.h_min, self.h_max, self.seed)

    # ------------------------------------------------------------------
    # access
    def first(self, i: int, k: int):
        """Gain from source ``S_i`` to relay ``R_k`` (scalar or antenna vector)."""
        try:
            h = self.first_links[(i, k)]
        except KeyError:
            raise ConfigurationError(f"no link S{i}->R{k} in topology {self.topology.label}") from None
        return complex(h[0]) if self.topology.antennas(k) == 1 else h

    def second(self, k: int, i: int):
        """Gain from relay ``R_k`` to destination ``D_i`` (scalar or antenna vector)."""
        try:
            h = self.second_links[(k, i)]
        except KeyError:
            raise ConfigurationError(f"no link R{k}->D{i} in topology {self.topology.label}") from None
        return complex(h[0]) if self.topology.antennas(k) == 1 else h

    def first_vec(self, i: int, k: int) -> np.ndarray:
        return self.first_links[(i, k)]

    def second_vec(self, k: int, i: int) -> np.ndarray:
        return self.second_links[(k, i)]

    def coefficients(self) -> np.ndarray:
        """All coefficients concatenated in canonical link order."""
        parts = [self.first_links[key] for key in self.topology.first_hop_links]
        parts += [self.second_links[key] for key in self.topology.second_hop_links]
        return np.concatenate(parts)

    def __eq__(self, other):
        if not isinstance(other, ChannelRealization):
            return NotImplemented
        return (self.topology == other.topology and self.h_min == other.h_min
                and self.h_max == other.h_max and self.seed == other.seed
                and np.array_equal(self.coefficients(), other.coefficients()))

    __hash__ = None

    # ------------------------------------------------------------------
    # serialization
    def to_dict(self) -> dict:
        coeffs = {}
        for i, k in self.topology.first_hop_links:
            coeffs[_first_key(i, k)] = _encode(self.first_links[(i, k)], self.topology.antennas(k))
        for k, i in self.topology.second_hop_links:
            coeffs[_second_key(k, i)] = _encode(self.second_links[(k, i)], self.topology.antennas(k))
        return {
            "variant": self.topology.variant.value,
            "n_antennas": self.topology.n_antennas,
            "seed": self.seed,
            "h_min": self.h_min,
            "h_max": self.h_max,
            "coefficients": coeffs,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ChannelRealization":
        topo = Topology.from_dict(data)
        first, second = {}, {}
        for key, value in data["coefficients"].items():
            src, _, dst = key.partition("->")
            vec = _decode(value)
            if src.startswith("S") and dst.startswith("R"):
                first[(int(src[1:]), int(dst[1:]))] = vec
            elif src.startswith("R") and dst.startswith("D"):
                second[(int(src[1:]), int(dst[1:]))] = vec
            else:
                raise ConfigurationError(f"unrecognized link key {key!r}")
        return cls(topo, first, second, float(data["h_min"]), float(data["h_max"]), data.get("seed"))

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        return cls.from_dict(json.loads(text))


def _encode(h: np.ndarray, n: int):
    pairs = [[float(z.real), float(z.imag)] for z in h]
    return pairs[0] if n == 1 else pairs


def _decode(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"coefficient must be [re, im] or a list of them, got {value!r}")
    return arr[:, 0] + 1j * arr[:, 1]


def _check_bounds(h_min: float, h_max: float) -> None:
    if not (np.isfinite(h_min) and np.isfinite(h_max)) or h_min <= 0 or h_min >= h_max:
        raise ConfigurationError(f"need 0 < h_min < h_max, got h_min={h_min}, h_max={h_max}")


def sample_channels(topology: Topology, seed: int, h_min: float = DEFAULT_H_MIN,
                    h_max: float = DEFAULT_H_MAX) -> ChannelRealization:
    """Draw every coefficient with uniform magnitude on (h_min, h_max) and uniform phase.

    The draw order is the canonical link order, so a given seed always
    produces the same realization.
    """
    _check_bounds(h_min, h_max)
    rng = np.random.default_rng(seed)
    low = np.nextafter(h_min, np.inf)

    def draw(n):
        mag = rng.uniform(low, h_max, n)
        phase = rng.uniform(0.0, 2.0 * np.pi, n)
        return mag * np.exp(1j * phase)

    first = {(i, k): draw(topology.antennas(k)) for i, k in topology.first_hop_links}
    second = {(k, i): draw(topology.antennas(k)) for k, i in topology.second_hop_links}
    return ChannelRealization(topology, first, second, h_min, h_max, seed)


@dataclass(frozen=True)
class SymbolFrame:
    """Symbols of one transmission frame; the last axis of every array is the slot index.

    Multi-antenna relays carry an extra leading antenna axis.
    """

    x: np.ndarray
    relay_rx: Mapping[int, np.ndarray]
    relay_tx: Mapping[int, np.ndarray]
    dest_rx: Mapping[int, np.ndarray]

    @property
    def n_slots(self) -> int:
        return self.x.shape[-1]


@dataclass(frozen=True)
class MessageSet:
    """Four equal-length bit strings, one message per source."""

    bits: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        if len(self.bits) != 4:
            raise ConfigurationError("a message set has exactly four messages")
        arrays = []
        for w in self.bits:
            arr = np.array(w, dtype=np.uint8).reshape(-1)
            if np.any(arr > 1):
                raise ConfigurationError("messages must be bit arrays")
            arr.setflags(write=False)
            arrays.append(arr)
        object.__setattr__(self, "bits", tuple(arrays))

    @classmethod
    def from_strings(cls, strings) -> "MessageSet":
        return cls(tuple(np.array([int(c) for c in s], dtype=np.uint8) for s in strings))

    @classmethod
    def random(cls, length: int, seed: int) -> "MessageSet":
        rng = np.random.default_rng(seed)
        return cls(tuple(rng.integers(0, 2, length, dtype=np.uint8) for _ in range(4)))

    def __getitem__(self, source: int) -> np.ndarray:
        """Message of source ``S_source`` (1-based)."""
        return self.bits[source - 1]

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.bits)


def co_located_source(dest: int) -> int:
    """Source co-located with destination ``dest`` (its side information)."""
    try:
        return _CO_LOCATED[dest]
    except KeyError:
        raise ConfigurationError(f"no destination D{dest}") from None


def co_located_destination(source: int) -> int:
    for dest, src in _CO_LOCATED.items():
        if src == source:
            return dest
    raise ConfigurationError(f"no source S{source}")


def intended_source(dest: int) -> int:
    if dest not in DESTINATIONS:
        raise ConfigurationError(f"no destination D{dest}")
    return dest


def _as_sources(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0 or x.shape[0] != 4:
        raise ShapeError(f"source symbols need a leading axis of length 4, got shape {x.shape}")
    return x


def _add_noise(y: dict, noise: Mapping | None, nodes: str) -> dict:
    if noise is None:
        return y
    if set(noise) != set(y):
        raise ShapeError(f"noise supplied for {sorted(noise)}, expected {nodes} {sorted(y)}")
    out = {}
    for key, val in y.items():
        z = np.asarray(noise[key], dtype=complex)
        if z.shape != np.shape(val):
            raise ShapeError(f"noise for node {key} has shape {z.shape}, expected {np.shape(val)}")
        out[key] = val + z
    return out


def first_hop(ch: ChannelRealization, x, noise: Mapping | None = None) -> dict[int, np.ndarray]:
    """Signals received at the relays, keyed by relay index.

    ``x`` has shape ``(4,)`` or ``(4, T)``.  A relay with ``n > 1`` antennas
    receives an array with a leading axis of length ``n``.
    """
    x = _as_sources(x)
    topo = ch.topology
    y = {}
    for k in topo.relays:
        n = topo.antennas(k)
        acc = np.zeros((n,) + x.shape[1:], dtype=complex)
        for i in topo.sources_heard_by(k):
            h = ch.first_vec(i, k).reshape((n,) + (1,) * (x.ndim - 1))
            acc = acc + h * x[i - 1]
        y[k] = acc[0] if n == 1 else acc
    return _add_noise(y, noise, "relays")


def second_hop(ch: ChannelRealization, x_relay: Mapping, noise: Mapping | None = None) -> dict[int, np.ndarray]:
    """Signals received at the destinations, keyed by destination index.

    ``x_relay`` maps each relay of the topology to its transmit symbols; a
    multi-antenna relay supplies an array with a leading antenna axis.
    """
    topo = ch.topology
    if set(x_relay) != set(topo.relays):
        raise ShapeError(f"relay symbols given for {sorted(x_relay)}, topology has {topo.relays}")
    xs = {}
    tail = None
    for k in topo.relays:
        xk = np.asarray(x_relay[k], dtype=complex)
        n = topo.antennas(k)
        if n > 1:
            if xk.ndim == 0 or xk.shape[0] != n:
                raise ShapeError(f"R{k} symbols need a leading axis of length {n}, got {xk.shape}")
            shape = xk.shape[1:]
        else:
            shape = xk.shape
        if tail is not None and shape != tail:
            raise ShapeError("relay symbol frames have mismatched lengths")
        tail = shape
        xs[k] = xk
    y = {}
    for i in DESTINATIONS:
        acc = np.zeros(tail, dtype=complex)
        for k in topo.relays_heard_by(i):
            h = ch.second_vec(k, i)
            if topo.antennas(k) > 1:
                acc = acc + np.tensordot(h, xs[k], axes=1)
            else:
                acc = acc + h[0] * xs[k]
        y[i] = acc
    return _add_noise(y, noise, "destinations")


def _node_code(node: str) -> int:
    return zlib.crc32(node.encode())


def complex_noise(seed: int, node: str, shape, start_slot: int = 0) -> np.ndarray:
    """Unit-variance circularly symmetric Gaussian noise for ``node``.

    Keyed by ``(seed, node, start_slot)`` so frames can be generated in any
    order or in parallel and still reproduce.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, _node_code(node), start_slot]))
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def gaussian_symbols(seed: int, stream: str, n_slots: int, power: float = 1.0) -> np.ndarray:
    """Gaussian codebook samples for a named stream, shared by every node that knows it."""
    return np.sqrt(power) * complex_noise(seed, "codebook:" + stream, n_slots)
