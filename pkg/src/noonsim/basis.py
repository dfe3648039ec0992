"""Excitation-number truncated Hilbert spaces for emitter/cavity networks.

A state is a tuple of emitter bits (two-level emitters) followed by bosonic
mode occupations. A sector holds every configuration with exactly ``M``
excitations; a :class:`TruncatedSpace` is the direct sum of sectors ``0..M``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
from scipy import sparse

SCHEME_I = "ArrayI"
SCHEME_II = "DdiII"


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class SlotLayout:
    """Ordered emitter and mode slot identifiers.

    Emitters always precede modes in the canonical slot order.
    """

    emitter_slots: tuple[str, ...]
    mode_slots: tuple[str, ...]
    scheme_tag: str = ""

    def __post_init__(self):
        names = self.emitter_slots + self.mode_slots
        if len(set(names)) != len(names):
            raise BasisError(f"duplicate slot identifiers in {names}")

    @property
    def n_emitters(self) -> int:
        return len(self.emitter_slots)

    @property
    def n_modes(self) -> int:
        return len(self.mode_slots)

    @property
    def slots(self) -> tuple[str, ...]:
        return self.emitter_slots + self.mode_slots

    def slot_position(self, slot: str) -> tuple[str, int]:
        """Return ``("emitter", i)`` or ``("mode", i)`` for a slot name."""
        if slot in self.emitter_slots:
            return "emitter", self.emitter_slots.index(slot)
        if slot in self.mode_slots:
            return "mode", self.mode_slots.index(slot)
        raise BasisError(f"unknown slot {slot!r}")

    def emitters_only(self) -> "SlotLayout":
        return SlotLayout(self.emitter_slots, (), self.scheme_tag)


def scheme1_layout(n_subsystems: int) -> SlotLayout:
    """Cascaded array: emitters s1..sN, modes a1..a2N (odd, even per cavity)."""
    if n_subsystems < 1:
        raise BasisError("need at least one subsystem")
    emitters = tuple(f"s{n}" for n in range(1, n_subsystems + 1))
    modes = tuple(f"a{k}" for k in range(1, 2 * n_subsystems + 1))
    return SlotLayout(emitters, modes, SCHEME_I)


def scheme2_layout(emitters_per_cavity: int) -> SlotLayout:
    """Two rings: emitters s1..sN (left) then sN+1..s2N (right), modes a1..a4."""
    if emitters_per_cavity < 1:
        raise BasisError("need at least one emitter per cavity")
    emitters = tuple(f"s{n}" for n in range(1, 2 * emitters_per_cavity + 1))
    return SlotLayout(emitters, ("a1", "a2", "a3", "a4"), SCHEME_II)


class BasisState(NamedTuple):
    emitter_bits: tuple[int, ...]
    mode_occupations: tuple[int, ...]

    @property
    def excitation(self) -> int:
        return sum(self.emitter_bits) + sum(self.mode_occupations)

    def label(self, layout: SlotLayout) -> str:
        parts = [s for s, b in zip(layout.emitter_slots, self.emitter_bits) if b]
        for s, n in zip(layout.mode_slots, self.mode_occupations):
            if n == 1:
                parts.append(s)
            elif n > 1:
                parts.append(f"{s}^{n}")
        return "|" + ",".join(parts) + ">" if parts else "|vac>"


def _occupations(n_slots: int, total: int, cap: int | None) -> Iterator[tuple[int, ...]]:
    # lexicographically descending compositions of ``total`` into ``n_slots`` parts
    if n_slots == 0:
        if total == 0:
            yield ()
        return
    top = total if cap is None else min(cap, total)
    for first in range(top, -1, -1):
        for rest in _occupations(n_slots - 1, total - first, cap):
            yield (first,) + rest


def count_states(n_emitters: int, n_modes: int, m: int) -> int:
    """Closed-form sector dimension: sum_k C(E, k) * C(m - k + B - 1, B - 1)."""
    total = 0
    for k in range(min(n_emitters, m) + 1):
        rest = m - k
        if n_modes == 0:
            bos = 1 if rest == 0 else 0
        else:
            bos = math.comb(rest + n_modes - 1, n_modes - 1)
        total += math.comb(n_emitters, k) * bos
    return total


@dataclass(frozen=True)
class ExcitationBasis:
    """All configurations with exactly ``excitation_number`` excitations."""

    layout: SlotLayout
    excitation_number: int
    states: tuple[BasisState, ...]
    _index: dict = field(repr=False, compare=False, hash=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index_of(self, state: BasisState | Sequence) -> int:
        state = _as_state(state)
        try:
            return self._index[state]
        except KeyError:
            raise BasisError(
                f"state {state} not in the M={self.excitation_number} basis"
            ) from None

    def state_at(self, position: int) -> BasisState:
        return self.states[position]

    def labels(self) -> list[str]:
        return [s.label(self.layout) for s in self.states]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "index": i,
                    "emitter_bits": list(s.emitter_bits),
                    "mode_occupations": list(s.mode_occupations),
                }
            )
            for i, s in enumerate(self.states)
        ]
        return "\n".join(lines) + "\n"


def _as_state(state) -> BasisState:
    if isinstance(state, BasisState):
        return state
    bits, occ = state
    return BasisState(tuple(int(b) for b in bits), tuple(int(n) for n in occ))


def enumerate_basis(layout: SlotLayout, m: int) -> ExcitationBasis:
    """Canonically ordered basis of the ``m``-excitation sector.

    Order: lexicographically descending over (emitter bits, mode occupations),
    so ``s1`` excited comes first and the vacuum-heavy configurations last.
    """
    if m < 0:
        raise BasisError("excitation number must be non-negative")
    states = []
    for n_exc in range(min(layout.n_emitters, m) + 1):
        for bits in _occupations(layout.n_emitters, n_exc, 1):
            for occ in _occupations(layout.n_modes, m - n_exc, None):
                states.append(BasisState(bits, occ))
    states.sort(reverse=True)
    index = {s: i for i, s in enumerate(states)}
    return ExcitationBasis(layout, m, tuple(states), index)


def raising_matrix(lower: ExcitationBasis, upper: ExcitationBasis, slot: str) -> sparse.csr_matrix:
    """Creation operator for ``slot`` mapping sector M (columns) to M+1 (rows).

    Bosonic amplitude is sqrt(n + 1); an emitter that is already excited has
    no matrix element. The annihilation operator is the conjugate transpose.
    """
    if lower.layout != upper.layout:
        raise BasisError("sectors built on different layouts")
    if upper.excitation_number != lower.excitation_number + 1:
        raise BasisError("sectors must differ by exactly one excitation")
    kind, pos = lower.layout.slot_position(slot)
    rows, cols, vals = [], [], []
    for col, st in enumerate(lower.states):
        if kind == "emitter":
            if st.emitter_bits[pos]:
                continue
            bits = list(st.emitter_bits)
            bits[pos] = 1
            target = BasisState(tuple(bits), st.mode_occupations)
            amp = 1.0
        else:
            occ = list(st.mode_occupations)
            occ[pos] += 1
            target = BasisState(st.emitter_bits, tuple(occ))
            amp = math.sqrt(occ[pos])
        rows.append(upper.index_of(target))
        cols.append(col)
        vals.append(amp)
    return sparse.csr_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(upper.dim, lower.dim)
    )


def raising_matrix_elements(lower, upper, slot) -> list[tuple[int, int, float]]:
    """``(row, col, amplitude)`` triples of :func:`raising_matrix`."""
    coo = raising_matrix(lower, upper, slot).tocoo()
    return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.real.tolist()))


class TruncatedSpace:
    """Direct sum of the excitation sectors ``0..max_excitation``.

    Global indices run sector by sector, vacuum first.
    """

    def __init__(self, layout: SlotLayout, max_excitation: int):
        if max_excitation < 0:
            raise BasisError("max_excitation must be non-negative")
        self.layout = layout
        self.max_excitation = max_excitation
        self.sectors = tuple(enumerate_basis(layout, m) for m in range(max_excitation + 1))
        offsets = np.cumsum([0] + [b.dim for b in self.sectors])
        self.offsets = tuple(int(o) for o in offsets)
        self.dim = self.offsets[-1]
        self._creators: dict[str, sparse.csr_matrix] = {}

    def __repr__(self):
        tag = self.layout.scheme_tag or "custom"
        return f"TruncatedSpace({tag}, M<={self.max_excitation}, dim={self.dim})"

    def sector(self, m: int) -> ExcitationBasis:
        return self.sectors[m]

    def sector_slice(self, m: int) -> slice:
        return slice(self.offsets[m], self.offsets[m + 1])

    def global_index(self, state) -> int:
        state = _as_state(state)
        m = state.excitation
        if m > self.max_excitation:
            raise BasisError(f"state {state} exceeds truncation M={self.max_excitation}")
        return self.offsets[m] + self.sectors[m].index_of(state)

    @property
    def vacuum_index(self) -> int:
        return 0

    def states(self) -> list[BasisState]:
        return [s for b in self.sectors for s in b.states]

    def excitation_numbers(self) -> np.ndarray:
        return np.concatenate([np.full(b.dim, b.excitation_number) for b in self.sectors])

    def creator(self, slot: str) -> sparse.csr_matrix:
        """Creation operator for ``slot`` on the whole space (truncated at the top sector)."""
        if slot not in self._creators:
            op = sparse.lil_matrix((self.dim, self.dim), dtype=complex)
            for m in range(self.max_excitation):
                block = raising_matrix(self.sectors[m], self.sectors[m + 1], slot)
                op[self.sector_slice(m + 1), self.sector_slice(m)] = block
            self._creators[slot] = op.tocsr()
        return self._creators[slot]

    def annihilator(self, slot: str) -> sparse.csr_matrix:
        return self.creator(slot).conj().T.tocsr()

    def embed(self, vector: np.ndarray, m: int) -> np.ndarray:
        """Place a sector-``m`` amplitude vector into the full space."""
        out = np.zeros(self.dim, dtype=complex)
        out[self.sector_slice(m)] = vector
        return out


def reference_order_scheme1_single() -> list[BasisState]:
    """Amplitude order c1..c6 used for two subsystems with one excitation.

    c1: s1, c2: a1, c3: a2, c4: s2, c5: a3, c6: a4.
    """
    layout = scheme1_layout(2)
    return [_slot_state(layout, [s]) for s in ("s1", "a1", "a2", "s2", "a3", "a4")]


def reference_order_scheme2_double() -> list[BasisState]:
    """Amplitude order c1..c32 for two rings with two emitters each, M = 2."""
    layout = scheme2_layout(2)
    em = ["s1", "s2", "s3", "s4"]
    md = ["a1", "a2", "a3", "a4"]
    pairs: list[list[str]] = []
    pairs += [[em[i], em[j]] for i in range(4) for j in range(i + 1, 4)]
    pairs += [[e, a] for e in em for a in md]
    pairs += [[a, a] for a in md]
    pairs += [[md[i], md[j]] for i in range(4) for j in range(i + 1, 4)]
    return [_slot_state(layout, p) for p in pairs]


def _slot_state(layout: SlotLayout, slots: Iterable[str]) -> BasisState:
    bits = [0] * layout.n_emitters
    occ = [0] * layout.n_modes
    for s in slots:
        kind, pos = layout.slot_position(s)
        if kind == "emitter":
            bits[pos] += 1
        else:
            occ[pos] += 1
    return BasisState(tuple(bits), tuple(occ))


def state_from_slots(layout: SlotLayout, slots: Iterable[str]) -> BasisState:
    """Basis state with one excitation per listed slot (repeats stack on modes)."""
    st = _slot_state(layout, slots)
    if any(b > 1 for b in st.emitter_bits):
        raise BasisError("a two-level emitter holds at most one excitation")
    return st


def order_permutation(basis: ExcitationBasis, ordering: Sequence[BasisState]) -> np.ndarray:
    """Indices ``p`` such that ``basis.states[p[k]] == ordering[k]``.

    ``amplitudes[p]`` re-expresses a canonical amplitude vector in ``ordering``.
    """
    perm = np.array([basis.index_of(s) for s in ordering], dtype=int)
    if sorted(perm.tolist()) != list(range(basis.dim)):
        raise BasisError("ordering is not a permutation of the basis")
    return perm
