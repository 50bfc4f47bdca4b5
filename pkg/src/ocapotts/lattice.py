"""Grid geometry, lexicographic ordering and conditioning-set construction.

Sites and labels are 0-based inside the library. Site ``i`` sits at
``(row, col) = divmod(i, n2)``. Text formats (CSV labels, plan dumps) are
1-based; conversion happens at the I/O boundary only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    n1: int
    n2: int

    def __post_init__(self):
        if int(self.n1) < 1 or int(self.n2) < 1:
            raise LatticeError(f"lattice dimensions must be positive, got {self.n1}x{self.n2}")

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    def lex_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.n1 and 0 <= col < self.n2):
            raise LatticeError(f"({row}, {col}) outside {self.n1}x{self.n2} grid")
        return row * self.n2 + col

    def coords(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.n:
            raise LatticeError(f"site {i} outside 0..{self.n - 1}")
        return divmod(i, self.n2)

    def neighbors(self, i: int) -> list[int]:
        """First-order (4-pixel) neighbours of site ``i``, in increasing order."""
        r, c = self.coords(i)
        out = []
        if r > 0:
            out.append(i - self.n2)
        if c > 0:
            out.append(i - 1)
        if c < self.n2 - 1:
            out.append(i + 1)
        if r < self.n1 - 1:
            out.append(i + self.n2)
        return out

    def edges(self) -> np.ndarray:
        """All unordered neighbour pairs as an ``(n_edges, 2)`` array, horizontal first."""
        idx = np.arange(self.n).reshape(self.n1, self.n2)
        horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
        vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
        return np.concatenate([horiz, vert], axis=0).astype(np.int64)

    @property
    def n_edges(self) -> int:
        return self.n1 * (self.n2 - 1) + (self.n1 - 1) * self.n2


def lex_index(row: int, col: int, lattice: Lattice) -> int:
    return lattice.lex_index(row, col)


def neighbors(i: int, lattice: Lattice) -> list[int]:
    return lattice.neighbors(i)


def _offset_template(m: int, past: bool) -> list[tuple[int, int, int]]:
    # Offsets (d2, dr, dc) on one side of the ordering, sorted by squared
    # distance then ordering index. The radius leaves room for a corner site,
    # which only sees a quarter of the disc.
    radius = int(math.ceil(math.sqrt(4.0 * (m + 1) / math.pi))) + 2
    out = []
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            d2 = dr * dr + dc * dc
            if d2 == 0 or d2 > radius * radius:
                continue
            if past != (dr < 0 or (dr == 0 and dc < 0)):
                continue
            out.append((d2, dr, dc))
    out.sort()
    return out


def _nearest_bruteforce(lattice: Lattice, i: int, m: int, past: bool) -> list[int]:
    r, c = lattice.coords(i)
    cand = range(0, i) if past else range(i + 1, lattice.n)
    keyed = []
    for j in cand:
        rj, cj = divmod(j, lattice.n2)
        keyed.append(((rj - r) ** 2 + (cj - c) ** 2, j))
    keyed.sort()
    return [j for _, j in keyed[:m]]


def _nearest(lattice: Lattice, i: int, m: int, past: bool, template) -> list[int]:
    want = min(m, i if past else lattice.n - 1 - i)
    if want == 0:
        return []
    r, c = divmod(i, lattice.n2)
    out = []
    for d2, dr, dc in template:
        rr, cc = r + dr, c + dc
        if 0 <= rr < lattice.n1 and 0 <= cc < lattice.n2:
            out.append(rr * lattice.n2 + cc)
            if len(out) == want:
                break
    if len(out) < want:
        # template holds every offset within its radius, so a short list only
        # means the grid edge ate it
        return _nearest_bruteforce(lattice, i, want, past)
    return out


@dataclass(frozen=True)
class OcaPlan:
    """Conditioning sets and the neighbour pairs of each truncated Hamiltonian.

    For site ``i`` the window is ``V_i = g(i) + [i] + f(i)`` laid out in that
    order (``g`` and ``f`` each sorted ascending). ``pair_a``/``pair_b`` hold
    window-local positions, sliced per site by ``pair_ptr``.
    """

    lattice: Lattice
    m_g: int
    m_f: int
    prune_past_pairs: bool
    members: np.ndarray = field(repr=False)
    member_ptr: np.ndarray = field(repr=False)
    n_past: np.ndarray = field(repr=False)
    pair_a: np.ndarray = field(repr=False)
    pair_b: np.ndarray = field(repr=False)
    pair_ptr: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.lattice.n

    def window(self, i: int) -> np.ndarray:
        return self.members[self.member_ptr[i]:self.member_ptr[i + 1]]

    def g(self, i: int) -> np.ndarray:
        lo = self.member_ptr[i]
        return self.members[lo:lo + self.n_past[i]]

    def f(self, i: int) -> np.ndarray:
        lo = self.member_ptr[i] + self.n_past[i] + 1
        return self.members[lo:self.member_ptr[i + 1]]

    def pairs(self, i: int) -> list[tuple[int, int]]:
        """Neighbour pairs of ``H_i`` as sorted global site indices."""
        win = self.window(i)
        sl = slice(self.pair_ptr[i], self.pair_ptr[i + 1])
        return sorted(
            tuple(sorted((int(win[a]), int(win[b]))))
            for a, b in zip(self.pair_a[sl], self.pair_b[sl])
        )

    @property
    def max_window(self) -> int:
        return int(np.max(np.diff(self.member_ptr)))

    @property
    def max_future(self) -> int:
        return int(np.max(np.diff(self.member_ptr) - self.n_past - 1))

    def dump(self) -> str:
        """One line per site, ``i; g(i); f(i)``, all 1-based."""
        lines = []
        for i in range(self.n):
            g = ",".join(str(j + 1) for j in self.g(i))
            f = ",".join(str(j + 1) for j in self.f(i))
            lines.append(f"{i + 1}; {g}; {f}")
        return "\n".join(lines) + "\n"


def build_oca_plan(lattice: Lattice, m_g: int, m_f: int, prune_past_pairs: bool = False) -> OcaPlan:
    """Nearest past/future conditioning sets for every site.

    Nearness is Euclidean on grid coordinates, ties broken by the smaller
    ordering index. Sets shrink near the ends of the ordering.
    ``prune_past_pairs`` drops pairs with both ends in ``g(i)``; those factors
    cancel from every conditional ratio.
    """
    if m_g < 0 or m_f < 0:
        raise LatticeError(f"set sizes must be non-negative, got m_g={m_g}, m_f={m_f}")
    n, n2 = lattice.n, lattice.n2
    past_t = _offset_template(m_g, past=True)
    fut_t = _offset_template(m_f, past=False)

    members, member_ptr, n_past = [], [0], []
    pair_a, pair_b, pair_ptr = [], [], [0]
    for i in range(n):
        g = sorted(_nearest(lattice, i, m_g, True, past_t))
        f = sorted(_nearest(lattice, i, m_f, False, fut_t))
        win = g + [i] + f
        pos = {j: p for p, j in enumerate(win)}
        ng = len(g)
        for p, j in enumerate(win):
            r, c = divmod(j, n2)
            # right and down neighbours enumerate each pair once
            for q in ((j + 1) if c + 1 < n2 else -1, (j + n2) if r + 1 < lattice.n1 else -1):
                if q < 0 or q not in pos:
                    continue
                pq = pos[q]
                if prune_past_pairs and p < ng and pq < ng:
                    continue
                pair_a.append(p)
                pair_b.append(pq)
        members.extend(win)
        member_ptr.append(len(members))
        n_past.append(ng)
        pair_ptr.append(len(pair_a))

    as_i64 = lambda x: np.asarray(x, dtype=np.int64)  # noqa: E731
    return OcaPlan(
        lattice=lattice,
        m_g=int(m_g),
        m_f=int(m_f),
        prune_past_pairs=bool(prune_past_pairs),
        members=as_i64(members),
        member_ptr=as_i64(member_ptr),
        n_past=as_i64(n_past),
        pair_a=as_i64(pair_a),
        pair_b=as_i64(pair_b),
        pair_ptr=as_i64(pair_ptr),
    )


def full_plan(lattice: Lattice, prune_past_pairs: bool = False) -> OcaPlan:
    """Plan whose windows cover the whole grid (the exact ordered factorisation)."""
    return build_oca_plan(lattice, lattice.n, lattice.n, prune_past_pairs)
