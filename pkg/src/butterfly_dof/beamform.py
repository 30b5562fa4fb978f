"""Interference nulling at a multi-antenna center relay.

The center relay ``R2`` forwards ``V2 @ Y_R2`` and the side relays stay
silent.  Destination ``D_d`` must not hear the two sources that are neither
its own nor its co-located one, giving eight bilinear conditions

    H_{R2,d} @ V2 @ H_{s,R2} = 0

which are linear in the entries of ``V2``.  With three antennas the 8x9
system always has a nontrivial nullspace, and a generic vector in it gives
four interference-free streams.  The rows are not independent: the two
blocks ``span{H_R2,1, H_R2,3} x span{H_2,R2, H_4,R2}`` and
``span{H_R2,2, H_R2,4} x span{H_1,R2, H_3,R2}`` share one rank-one tensor,
so the rank is 7 and the nullspace two-dimensional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, DegenerateChannelError, ShapeError, UnsupportedSchemeError
from .netmodel import DESTINATIONS, ChannelRealization, co_located_source
from .schemes import SchemeReport, _af_report

__all__ = [
    "NULLING_ROWS",
    "NullingSystem",
    "NullspaceBasis",
    "BeamformingSolution",
    "build_nulling_system",
    "nullspace",
    "nullspace_rref",
    "relay_power",
    "canonical_beamformer",
    "solve_v2",
    "run_mimo_scheme",
    "feasibility_count",
    "RANK_TOL",
]

RANK_TOL = 1e-9
NULLING_TOL = 1e-9
N_CONSTRAINTS = 8
# rank 7 of the 8x9 system for almost every channel, see module docstring
GENERIC_NULLSPACE_DIM = 2

# (destination, interfering source)
NULLING_ROWS = ((1, 2), (1, 4), (3, 4), (3, 2), (2, 1), (2, 3), (4, 3), (4, 1))


@dataclass(frozen=True)
class NullingSystem:
    """Constraint matrix acting on ``V2`` flattened in row-major order.

    With ``include_side_scalars`` two trailing columns hold the coefficients
    of the side-relay gains ``v1`` and ``v3``.
    """

    matrix: np.ndarray
    labels: tuple[tuple[int, int], ...]
    n_antennas: int
    include_side_scalars: bool = False

    def apply(self, V2: np.ndarray, v1: complex = 0j, v3: complex = 0j) -> np.ndarray:
        vec = np.asarray(V2, dtype=complex).reshape(-1)
        if self.include_side_scalars:
            vec = np.concatenate([vec, [v1, v3]])
        return self.matrix @ vec

    @property
    def n_parameters(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal basis of a right nullspace, one basis vector per column."""

    basis: np.ndarray
    rank: int
    singular_values: np.ndarray
    tol: float

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def gap(self) -> float:
        """Ratio of the smallest kept to the largest dropped singular value (inf if none dropped)."""
        s = self.singular_values
        if self.rank == 0:
            return 0.0
        dropped = s[self.rank] if self.rank < len(s) else 0.0
        return math.inf if dropped == 0 else float(s[self.rank - 1] / dropped)


@dataclass(frozen=True)
class BeamformingSolution:
    """Relay gains of the nulling scheme plus the certificate that they null.

    ``residuals`` are ``|H_{R2,d} V2 H_{s,R2}|`` in :data:`NULLING_ROWS`
    order and ``desired_gains[i]`` is ``H_{R2,i} V2 H_{i,R2}``.
    """

    v1: complex
    v3: complex
    V2: np.ndarray
    scale: float
    residuals: tuple[float, ...]
    desired_gains: Mapping[int, complex]

    def __post_init__(self):
        V2 = np.array(self.V2, dtype=complex)
        V2.setflags(write=False)
        object.__setattr__(self, "V2", V2)
        object.__setattr__(self, "desired_gains", MappingProxyType(dict(self.desired_gains)))

    def relay_gains(self, use_side_relays: bool = True) -> dict[int, object]:
        gains = {2: self.V2}
        if use_side_relays:
            gains.update({1: self.v1, 3: self.v3})
        return gains

    def to_dict(self) -> dict:
        def pair(z):
            return [float(z.real), float(z.imag)]
        return {
            "v1": pair(complex(self.v1)),
            "v3": pair(complex(self.v3)),
            "V2": [pair(z) for z in self.V2.reshape(-1)],
            "residuals": [float(r) for r in self.residuals],
            "desired_gains": {f"D{i}": pair(g) for i, g in sorted(self.desired_gains.items())},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _side_coefficient(ch: ChannelRealization, d: int, s: int) -> tuple[complex, complex]:
    """Coefficients of ``v1`` and ``v3`` in the (d, s) nulling condition."""
    coef = {1: 0j, 3: 0j}
    for k in (1, 3):
        if (k, d) in ch.second_links and (s, k) in ch.first_links:
            coef[k] = ch.second(k, d) * ch.first(s, k)
    return coef[1], coef[3]


def build_nulling_system(ch: ChannelRealization, include_side_scalars: bool = False) -> NullingSystem:
    """Row ``(d, s)`` is ``kron(H_{R2,d}, H_{s,R2})`` so that ``M @ V2.ravel()`` gives the eight bilinear forms."""
    topo = ch.topology
    if not topo.is_mimo:
        raise UnsupportedSchemeError("nulling system needs a multi-antenna center relay")
    if include_side_scalars and 1 not in topo.relays:
        raise ConfigurationError("side-relay scalars requested on a topology without side relays")
    rows = []
    for d, s in NULLING_ROWS:
        row = np.kron(ch.second_vec(2, d), ch.first_vec(s, 2))
        if include_side_scalars:
            row = np.concatenate([row, _side_coefficient(ch, d, s)])
        rows.append(row)
    return NullingSystem(np.array(rows), NULLING_ROWS, topo.n_antennas, include_side_scalars)


def nullspace(M, tol: float = RANK_TOL) -> NullspaceBasis:
    """Right nullspace from the SVD, rank cut at ``tol`` times the largest singular value.

    Basis columns are the right singular vectors of the smallest singular
    values, ordered from the smallest singular direction outward.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.size == 0:
        raise ShapeError(f"nullspace needs a nonempty 2-D matrix, got shape {M.shape}")
    if not tol > 0:
        raise ConfigurationError(f"rank tolerance must be positive, got {tol}")
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    cutoff = tol * s[0] if s.size else 0.0
    rank = int(np.sum(s > cutoff))
    basis = vh[rank:].conj().T[:, ::-1]
    return NullspaceBasis(basis, rank, s, tol)


def nullspace_rref(M, tol: float = RANK_TOL) -> NullspaceBasis:
    """Right nullspace by Gauss-Jordan elimination with partial pivoting.

    Independent of :func:`nullspace`; pivots smaller than ``tol`` times the
    largest entry of ``M`` count as zero.  The free-variable basis is
    orthonormalized with a QR factorization.
    """
    A = np.array(M, dtype=complex)
    if A.ndim != 2 or A.size == 0:
        raise ShapeError(f"nullspace needs a nonempty 2-D matrix, got shape {A.shape}")
    rows, cols = A.shape
    thresh = tol * np.max(np.abs(A))
    pivots, pivot_mags = [], []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[p, c]) <= thresh:
            continue
        A[[r, p]] = A[[p, r]]
        pivot_mags.append(abs(A[r, c]))
        A[r] /= A[r, c]
        for q in range(rows):
            if q != r and A[q, c] != 0:
                A[q] -= A[q, c] * A[r]
        pivots.append(c)
        r += 1
    free = [c for c in range(cols) if c not in pivots]
    vecs = np.zeros((cols, len(free)), dtype=complex)
    for j, f in enumerate(free):
        vecs[f, j] = 1.0
        for i, pc in enumerate(pivots):
            vecs[pc, j] = -A[i, f]
    if free:
        vecs, _ = np.linalg.qr(vecs)
    return NullspaceBasis(vecs, len(pivots), np.array(pivot_mags), tol)


def relay_power(ch: ChannelRealization, V2: np.ndarray, P: float) -> float:
    """Average transmit power of ``R2`` forwarding ``V2 @ Y_R2`` with unit-variance noise.

    Uses the exact received covariance ``P * sum_i h_i h_i^H + I``.
    """
    n = ch.topology.n_antennas
    cov = np.eye(n, dtype=complex)
    for s in ch.topology.sources_heard_by(2):
        h = ch.first_vec(s, 2)
        cov += P * np.outer(h, h.conj())
    return float(np.trace(V2 @ cov @ V2.conj().T).real)


def nulling_residuals(ch: ChannelRealization, V2: np.ndarray) -> tuple[float, ...]:
    """``|H_{R2,d} V2 H_{s,R2}|`` evaluated directly, in :data:`NULLING_ROWS` order."""
    return tuple(float(abs(ch.second_vec(2, d) @ V2 @ ch.first_vec(s, 2))) for d, s in NULLING_ROWS)


def canonical_beamformer(basis: np.ndarray, n: int) -> np.ndarray:
    """Orthogonal projection of the identity onto the nullspace, reshaped to ``n x n``.

    The nullspace is two-dimensional for generic channels, so a single
    singular direction is not well defined; the projection depends only on
    the subspace, not on the basis a solver happens to return.  Falls back
    to the first basis vector if the identity is orthogonal to the subspace.
    """
    ref = np.eye(n, dtype=complex).reshape(-1)
    v = basis @ (basis.conj().T @ ref)
    if np.linalg.norm(v) <= RANK_TOL * math.sqrt(n):
        v = basis[:, 0]
    return v.reshape(n, n)


def solve_v2(ch: ChannelRealization, P: float, tol: float = RANK_TOL) -> BeamformingSolution:
    """Center-relay beamformer that nulls all eight cross terms, scaled to power ``P``."""
    if not P > 0:
        raise ConfigurationError(f"power must be positive, got {P}")
    system = build_nulling_system(ch)
    ns = nullspace(system.matrix, tol)
    if ns.dim == 0:
        raise DegenerateChannelError("nulling system has full column rank; no nonzero beamformer")
    V2 = canonical_beamformer(ns.basis, ch.topology.n_antennas)
    scale = math.sqrt(P / relay_power(ch, V2, P))
    V2 = scale * V2
    residuals = nulling_residuals(ch, V2)
    desired = {i: complex(ch.second_vec(2, i) @ V2 @ ch.first_vec(i, 2)) for i in DESTINATIONS}
    norm = float(np.linalg.norm(V2))
    bound = NULLING_TOL * norm * ch.h_max ** 2
    if max(residuals) > bound:
        raise DegenerateChannelError(f"nulling residual {max(residuals):.3g} exceeds {bound:.3g}")
    for i, g in desired.items():
        if abs(g) <= bound:
            raise DegenerateChannelError(f"desired gain at D{i} vanishes (|g|={abs(g):.3g})")
    return BeamformingSolution(0j, 0j, V2, scale, residuals, desired)


def run_mimo_scheme(ch: ChannelRealization, P: float, use_side_relays: bool = True,
                    solution: BeamformingSolution | None = None) -> SchemeReport:
    """Four-stream amplify-forward through the nulling center relay.

    With ``use_side_relays=False`` the side relays are removed from the
    topology altogether; since they transmit nothing the gains are unchanged.
    """
    if not ch.topology.is_mimo:
        raise UnsupportedSchemeError("mimo scheme needs a multi-antenna center relay")
    if solution is None:
        solution = solve_v2(ch, P)
    if use_side_relays and 1 not in ch.topology.relays:
        use_side_relays = False
    if not use_side_relays and 1 in ch.topology.relays:
        ch = ch.without_side_relays()
    nodes = {"S1", "S2", "S3", "S4", "R2"}
    return _af_report("mimo" if use_side_relays else "mimo_no_side", ch, P,
                      solution.relay_gains(use_side_relays), served=DESTINATIONS,
                      active_sources=(1, 2, 3, 4), active_nodes=nodes)


def side_information_gain(ch: ChannelRealization, V2: np.ndarray, dest: int) -> complex:
    """Coefficient of the co-located source's symbols at ``dest``, removed before decoding."""
    s = co_located_source(dest)
    return complex(ch.second_vec(2, dest) @ V2 @ ch.first_vec(s, 2))


def feasibility_count(n_antennas: int, include_side_scalars: bool) -> dict:
    """Compare free beamformer parameters against the eight nulling conditions."""
    if int(n_antennas) != n_antennas or n_antennas < 1:
        raise ConfigurationError(f"n_antennas must be a positive integer, got {n_antennas!r}")
    params = n_antennas ** 2 + (2 if include_side_scalars else 0)
    return {
        "n_antennas": n_antennas,
        "include_side_scalars": include_side_scalars,
        "parameters": params,
        "constraints": N_CONSTRAINTS,
        "counting_feasible": params > N_CONSTRAINTS,
    }
