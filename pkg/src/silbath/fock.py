"""Truncated qubit x boson basis.

A bath pattern is stored as a sorted multiset of signed unit moves. Mode ``m``
(0-based) contributes label ``2m + 1`` per added boson and ``2m + 2`` per
removed boson relative to the reference occupation; ``0`` pads rows shorter
than ``n_ph``. A row never mixes both signs for one mode, so the multiset is
equivalent to the sparse displacement map {m: dn_m}.

Full-system ordinals interleave the qubit label fastest: ordinal
``2 * p + q`` holds bath pattern ``p`` with qubit ``q`` (0 = z;+, 1 = z;-).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, ResourceError

__all__ = [
    "BasisState",
    "FockBasis",
    "SystemState",
    "enumerate_basis",
    "vacuum_dimension",
    "initial_state",
    "qubit_amplitudes",
    "sample_thermal_occupations",
    "DEFAULT_DIMENSION_CAP",
]

DEFAULT_DIMENSION_CAP = 200_000_000

QUBIT_UP = 0
QUBIT_DOWN = 1


@dataclass(frozen=True)
class BasisState:
    """One basis vector: qubit label plus sparse bath displacement.

    ``deltas`` is a tuple of ``(mode, dn)`` pairs sorted by mode, with no
    zero entries; modes are 0-based.
    """

    qubit: int
    deltas: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.qubit not in (QUBIT_UP, QUBIT_DOWN):
            raise DomainError(f"qubit label must be 0 or 1, got {self.qubit}")
        modes = [m for m, _ in self.deltas]
        if modes != sorted(set(modes)) or any(d == 0 for _, d in self.deltas):
            raise DomainError(f"deltas must be sorted by unique mode with nonzero entries: {self.deltas}")

    @property
    def displacement(self) -> int:
        return sum(abs(d) for _, d in self.deltas)

    @classmethod
    def from_mapping(cls, qubit: int, deltas: dict[int, int]) -> "BasisState":
        return cls(qubit, tuple(sorted((int(m), int(d)) for m, d in deltas.items() if d != 0)))


def vacuum_dimension(m_modes: int, n_ph: int) -> int:
    """2 * sum_j C(M + j - 1, j): full dimension around the vacuum."""
    return 2 * sum(comb(m_modes + j - 1, j) for j in range(n_ph + 1))


def _pattern_count(reference: np.ndarray, n_ph: int) -> int:
    # generating polynomial in the displacement, truncated at degree n_ph
    poly = [1] + [0] * n_ph
    for n_eq in reference:
        factor = [1] + [1 + (1 if d <= n_eq else 0) for d in range(1, n_ph + 1)]
        new = [0] * (n_ph + 1)
        for i, a in enumerate(poly):
            if a:
                for d in range(n_ph + 1 - i):
                    new[i + d] += a * factor[d]
        poly = new
    return sum(poly)


class FockBasis:
    """Immutable enumerated basis with exact reverse lookup.

    Built by :func:`enumerate_basis`; not meant to be constructed directly.
    """

    def __init__(self, labels: np.ndarray, levels: np.ndarray, m_modes: int, n_ph: int,
                 reference: np.ndarray):
        self.m_modes = int(m_modes)
        self.n_ph = int(n_ph)
        self.reference = reference
        self._labels = labels
        self._levels = levels
        self._base = 2 * self.m_modes + 1
        keys = self._keys(labels)
        order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[order]
        self._key_order = order
        for arr in (labels, levels, reference):
            arr.setflags(write=False)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_patterns(self) -> int:
        return len(self._levels)

    @property
    def dimension(self) -> int:
        return 2 * self.n_patterns

    def __len__(self) -> int:
        return self.dimension

    @property
    def labels(self) -> np.ndarray:
        """(n_patterns, n_ph) signed-move labels, canonical order."""
        return self._labels

    @property
    def levels(self) -> np.ndarray:
        """Total displacement sum_k |dn_k| of every bath pattern."""
        return self._levels

    @property
    def is_vacuum(self) -> bool:
        return not np.any(self.reference)

    # -- keys and lookup ------------------------------------------------------
    def _keys(self, labels: np.ndarray) -> np.ndarray:
        keys = np.zeros(len(labels), dtype=np.int64)
        for i in range(labels.shape[1] if labels.ndim == 2 else 0):
            keys = keys * self._base + labels[:, i]
        return keys

    def lookup_labels(self, labels: np.ndarray) -> np.ndarray:
        """Pattern indices of padded label rows, -1 where outside the basis."""
        keys = self._keys(np.asarray(labels, dtype=np.int64))
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        hit = self._sorted_keys[pos] == keys
        return np.where(hit, self._key_order[pos], -1)

    def _encode(self, deltas: Sequence[tuple[int, int]]) -> np.ndarray | None:
        moves = []
        for m, d in deltas:
            if not 0 <= m < self.m_modes:
                return None
            moves.extend([2 * m + 1 if d > 0 else 2 * m + 2] * abs(d))
        if len(moves) > self.n_ph:
            return None
        row = np.zeros(self.n_ph, dtype=np.int64)
        row[: len(moves)] = sorted(moves)
        return row

    def lookup(self, state: BasisState) -> int | None:
        """Ordinal of ``state``, or ``None`` if it lies outside the truncation."""
        row = self._encode(state.deltas)
        if row is None:
            return None
        if self.n_ph == 0:
            p = 0
        else:
            p = int(self.lookup_labels(row[None, :])[0])
        if p < 0:
            return None
        return 2 * p + state.qubit

    def __contains__(self, state: BasisState) -> bool:
        return self.lookup(state) is not None

    # -- decoding -------------------------------------------------------------
    def pattern_deltas(self, p: int) -> tuple[tuple[int, int], ...]:
        out: dict[int, int] = {}
        for lab in self._labels[p]:
            if lab == 0:
                continue
            m, sign = divmod(int(lab) - 1, 2)
            out[m] = out.get(m, 0) + (1 if sign == 0 else -1)
        return tuple(sorted(out.items()))

    def state(self, ordinal: int) -> BasisState:
        if not 0 <= ordinal < self.dimension:
            raise IndexError(ordinal)
        p, q = divmod(ordinal, 2)
        return BasisState(q, self.pattern_deltas(p))

    @property
    def states(self) -> "_StateView":
        return _StateView(self)

    def __iter__(self) -> Iterator[BasisState]:
        return iter(self.states)

    def mode_delta(self, mode: int) -> np.ndarray:
        """dn_mode for every pattern."""
        lab = self._labels
        return (np.count_nonzero(lab == 2 * mode + 1, axis=1)
                - np.count_nonzero(lab == 2 * mode + 2, axis=1))

    def energies(self, frequencies: np.ndarray) -> np.ndarray:
        """Bath energy sum_k omega_k n_k of every pattern (zero point omitted)."""
        w = np.asarray(frequencies, dtype=float)
        table = np.zeros(2 * self.m_modes + 1)
        table[1::2] = w
        table[2::2] = -w
        e_ref = float(np.dot(self.reference, w))
        if self.n_ph == 0:
            return np.full(self.n_patterns, e_ref)
        return e_ref + table[self._labels].sum(axis=1)

    # -- connectivity ---------------------------------------------------------
    @cached_property
    def raising_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """All pattern pairs linked by one boson in one mode.

        Returns ``(lower, upper, mode, n_upper)``: pattern ``upper`` has one
        more boson in ``mode`` than ``lower``, and ``n_upper`` is that mode's
        absolute occupation in ``upper`` (so b^dagger contributes sqrt(n_upper)).
        Every such pair with both ends in the basis appears exactly once.
        """
        lab = self._labels
        lowers, uppers, modes, nups = [], [], [], []
        for i in range(self.n_ph):
            rows = np.nonzero(lab[:, i] != 0)[0]
            if i > 0:
                rows = rows[lab[rows, i] != lab[rows, i - 1]]
            if rows.size == 0:
                continue
            child = lab[rows]
            removed = child[:, i]
            parent_rows = np.concatenate(
                [np.delete(child, i, axis=1), np.zeros((len(rows), 1), dtype=child.dtype)], axis=1)
            parent = self.lookup_labels(parent_rows)
            assert np.all(parent >= 0)
            m, sign = np.divmod(removed.astype(np.int64) - 1, 2)
            plus = 2 * m + 1
            minus = 2 * m + 2
            d_child = (np.count_nonzero(child == plus[:, None], axis=1)
                       - np.count_nonzero(child == minus[:, None], axis=1))
            n_child = self.reference[m] + d_child
            is_add = sign == 0
            lowers.append(np.where(is_add, parent, rows))
            uppers.append(np.where(is_add, rows, parent))
            modes.append(m)
            nups.append(np.where(is_add, n_child, n_child + 1))
        if not lowers:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty, empty
        return tuple(np.concatenate(x) for x in (lowers, uppers, modes, nups))


class _StateView(Sequence):
    def __init__(self, basis: FockBasis):
        self._basis = basis

    def __len__(self):
        return self._basis.dimension

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._basis.state(j) for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        return self._basis.state(i)


def _allowed_labels(reference: np.ndarray) -> np.ndarray:
    m = len(reference)
    plus = 2 * np.arange(m) + 1
    minus = (2 * np.arange(m) + 2)[reference > 0]
    return np.sort(np.concatenate([plus, minus]))


def _extend(rows: np.ndarray, allowed: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """All sorted rows one label longer whose prefix is in ``rows``."""
    n, j = rows.shape
    if n == 0:
        return np.zeros((0, j + 1), dtype=rows.dtype)
    if j == 0:
        new = allowed.astype(rows.dtype)[:, None]
        return new
    last = rows[:, -1]
    start = np.searchsorted(allowed, last, side="left")
    counts = len(allowed) - start
    total = int(counts.sum())
    rep = np.repeat(np.arange(n), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    v = allowed[start[rep] + offs].astype(rows.dtype)
    parent = rows[rep]
    keep = np.ones(total, dtype=bool)
    is_minus = (v % 2) == 0
    if np.any(is_minus):
        # forbid +m and -m in one row, and removals beyond the reference
        keep &= ~(is_minus & (parent[:, -1] == v - 1))
        mi = np.nonzero(is_minus)[0]
        cnt = np.count_nonzero(parent[mi] == v[mi, None], axis=1) + 1
        keep[mi] &= cnt <= reference[(v[mi] - 2) // 2]
    return np.concatenate([parent[keep], v[keep, None]], axis=1)


def _canonical_order(rows: np.ndarray, m_modes: int) -> np.ndarray:
    """Permutation sorting same-level rows lexicographically on (mode, dn) pairs."""
    n, j = rows.shape
    if n <= 1 or j == 0:
        return np.arange(n)
    rows = rows.astype(np.int64)
    mode = (rows - 1) // 2
    sign = np.where(rows % 2 == 1, 1, -1)
    start = np.ones_like(rows, dtype=bool)
    start[:, 1:] = rows[:, 1:] != rows[:, :-1]
    # one integer per (mode, dn) pair, order-preserving; 0 pads short rows
    width = 2 * j + 1
    run = np.zeros_like(rows)
    for i in range(j):
        for k in range(j):
            run[:, i] += rows[:, k] == rows[:, i]
    codes = np.where(start, (mode + 1) * width + sign * run + j, 0)
    # compact the run starts to the left, keeping their order
    codes = np.take_along_axis(codes, np.argsort(~start, axis=1, kind="stable"), axis=1)
    base = (m_modes + 1) * width
    if base ** j < 2 ** 63:
        key = np.zeros(n, dtype=np.int64)
        for i in range(j):
            key = key * base + codes[:, i]
        return np.argsort(key, kind="stable")
    return np.lexsort([codes[:, i] for i in range(j - 1, -1, -1)])


def enumerate_basis(m_modes: int, n_ph: int, reference: Sequence[int] | np.ndarray | None = None,
                    *, cap: int = DEFAULT_DIMENSION_CAP) -> FockBasis:
    """Enumerate every pattern with sum_k |dn_k| <= n_ph and n_k >= 0.

    Canonical order: ascending total displacement, then lexicographic on the
    sorted ``(mode, dn)`` pairs. Raises :class:`ResourceError` carrying the
    required dimension if it exceeds ``cap`` amplitudes.
    """
    if int(m_modes) != m_modes or m_modes < 1:
        raise DomainError(f"m_modes must be an integer >= 1, got {m_modes}")
    if int(n_ph) != n_ph or n_ph < 0:
        raise DomainError(f"n_ph must be an integer >= 0, got {n_ph}")
    m_modes, n_ph = int(m_modes), int(n_ph)
    if reference is None:
        ref = np.zeros(m_modes, dtype=np.int64)
    else:
        ref = np.asarray(reference, dtype=np.int64).copy()
        if ref.shape != (m_modes,) or np.any(ref < 0):
            raise DomainError("reference must hold one nonnegative occupation per mode")
    if not np.any(ref):
        dim = vacuum_dimension(m_modes, n_ph)
    else:
        dim = 2 * _pattern_count(ref, n_ph)
    if dim > cap:
        raise ResourceError(f"basis dimension {dim} exceeds cap {cap}", dim)
    if n_ph > 0 and (2 * m_modes + 1) ** n_ph >= 2 ** 63:
        raise ResourceError(f"pattern keys overflow int64 for M={m_modes}, N_ph={n_ph}", dim)

    dtype = np.int16 if 2 * m_modes + 2 < 2 ** 15 else np.int32
    allowed = _allowed_labels(ref)
    blocks = []
    rows = np.zeros((1, 0), dtype=dtype)
    level_rows = [rows]
    for _ in range(n_ph):
        rows = _extend(rows, allowed, ref)
        level_rows.append(rows)
    levels = []
    for j, rows in enumerate(level_rows):
        rows = rows[_canonical_order(rows, m_modes)]
        pad = np.zeros((len(rows), n_ph - j), dtype=dtype)
        blocks.append(np.concatenate([rows, pad], axis=1))
        levels.append(np.full(len(rows), j, dtype=np.int16))
    labels = np.concatenate(blocks, axis=0)
    basis = FockBasis(labels, np.concatenate(levels), m_modes, n_ph, ref)
    assert basis.dimension == dim, (basis.dimension, dim)
    return basis


@dataclass
class SystemState:
    """Unit-norm amplitude vector over a :class:`FockBasis`."""

    amplitudes: np.ndarray
    basis: FockBasis

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.basis.dimension,):
            raise DomainError(
                f"amplitude vector has shape {self.amplitudes.shape}, basis needs ({self.basis.dimension},)")
        nrm = float(np.linalg.norm(self.amplitudes))
        if abs(nrm - 1.0) > 1e-10:
            raise DomainError(f"state is not normalized (norm = {nrm!r})")

    def copy(self) -> "SystemState":
        return SystemState(self.amplitudes.copy(), self.basis)


def qubit_amplitudes(prep) -> tuple[complex, complex]:
    """Resolve a qubit preparation to ``(c_plus, c_minus)`` in the z basis.

    ``prep`` may be a named state (``"z+"``, ``"z-"``, ``"x+"``, ``"x-"``), a
    ``(xi, phi)`` Bloch-angle pair given as a mapping, or explicit amplitudes.
    Bloch angles give cos(xi/2) |z;+> + sin(xi/2) e^{i phi} |z;->.
    """
    r = 1.0 / math.sqrt(2.0)
    named = {"z+": (1.0, 0.0), "z-": (0.0, 1.0), "x+": (r, r), "x-": (r, -r)}
    if isinstance(prep, str):
        try:
            return tuple(complex(c) for c in named[prep])
        except KeyError:
            raise DomainError(f"unknown named qubit state {prep!r}; choose from {sorted(named)}") from None
    if isinstance(prep, dict):
        xi, phi = float(prep["xi"]), float(prep.get("phi", 0.0))
        return complex(math.cos(xi / 2)), complex(math.sin(xi / 2) * np.exp(1j * phi))
    cp, cm = prep
    return complex(cp), complex(cm)


def initial_state(basis: FockBasis, qubit_prep) -> SystemState:
    """Factorized start: qubit preparation times the reference bath pattern."""
    cp, cm = qubit_amplitudes(qubit_prep)
    nrm = abs(cp) ** 2 + abs(cm) ** 2
    if abs(nrm - 1.0) > 1e-12:
        raise DomainError(f"qubit preparation is not normalized (|c+|^2 + |c-|^2 = {nrm})")
    amp = np.zeros(basis.dimension, dtype=np.complex128)
    amp[0] = cp
    amp[1] = cm
    return SystemState(amp, basis)


def sample_thermal_occupations(frequencies: np.ndarray, beta: float,
                               rng: np.random.Generator) -> np.ndarray:
    """Draw occupations from prod_k (1 - e^{-beta w_k}) e^{-beta w_k n_k}."""
    w = np.asarray(frequencies, dtype=float)
    if math.isinf(beta):
        return np.zeros(len(w), dtype=np.int64)
    p = -np.expm1(-beta * w)
    return rng.geometric(p).astype(np.int64) - 1
