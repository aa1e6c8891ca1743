"""A SMILES parser producing heavy-atom molecular graphs.

Covers the organic subset (B, C, N, O, P, S, F, Cl, Br, I and aromatic
b, c, n, o, p, s), bracket atoms with isotope / charge / explicit hydrogen
count, bond symbols ``- = # :``, branches, ring closures (including ``%nn``),
and dot-separated fragments. Stereochemistry markers (``/``, ``\\``, ``@``)
are accepted and discarded: the downstream fingerprints are 2-D and carry no
spatial information. Anything outside this subset raises a SmilesError with
the byte offset of the offending character rather than mis-parsing.

Aromaticity is taken syntactically from lowercase symbols and ``:`` bonds;
no kekulization or aromaticity perception is performed. Implicit hydrogen
counts use the default valences B=3, C=4, N=3, O=2, P=3, S=2, halogens=1,
with aromatic bonds contributing 1.5 to the bond-order sum (floored before
the subtraction). Bracket atoms take their hydrogen count verbatim. Bracket
``[H]`` atoms bonded to one heavy atom are folded into that atom's explicit
hydrogen count; they never appear as graph vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

SINGLE = "single"
DOUBLE = "double"
TRIPLE = "triple"
AROMATIC = "aromatic"

_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC}

BOND_ORDER_VALUE = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}

DEFAULT_VALENCES = {5: 3, 6: 4, 7: 3, 8: 2, 15: 3, 16: 2, 9: 1, 17: 1, 35: 1, 53: 1}

# Symbol -> atomic number, H..Og. Two-letter symbols are matched greedily.
_ELEMENT_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr "
    "Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()
ATOMIC_NUMBERS = {sym: i + 1 for i, sym in enumerate(_ELEMENT_SYMBOLS)}

_ORGANIC_TWO = ("Cl", "Br")
_ORGANIC_ONE = set("BCNOPSFI")
_ORGANIC_AROMATIC = set("bcnops")
_BRACKET_AROMATIC = {"b", "c", "n", "o", "p", "s", "se", "as"}


class SmilesError(ValueError):
    """Parse failure; `offset` is the byte position in the input string."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at position {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Atom:
    element: int  # atomic number
    aromatic: bool = False
    charge: int = 0
    isotope: int | None = None
    explicit_h: int | None = None  # bracket H-count plus any merged [H] neighbours
    implicit_h: int = 0
    degree: int = 0  # heavy-atom neighbours
    in_ring: bool = False
    from_bracket: bool = False  # bracket atoms take explicit_h verbatim, no implicit H

    @property
    def total_h(self) -> int:
        return self.implicit_h + (self.explicit_h or 0)


@dataclass(frozen=True)
class Bond:
    endpoints: tuple[int, int]  # atom indices, stored with the smaller first
    order: str  # single | double | triple | aromatic

    def __post_init__(self):
        i, j = self.endpoints
        if i == j:
            raise ValueError("self-loop bond")
        if i > j:
            object.__setattr__(self, "endpoints", (j, i))
        if self.order not in BOND_ORDER_VALUE:
            raise ValueError(f"unknown bond order {self.order!r}")

    def other(self, idx: int) -> int:
        i, j = self.endpoints
        return j if idx == i else i


@dataclass(frozen=True)
class MolecularGraph:
    """Heavy atoms plus bonds; `adjacency[i]` lists (neighbour, bond_index) pairs."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    adjacency: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, int], ...]:
        return self.adjacency[idx]


def build_adjacency(n_atoms: int, bonds) -> tuple[tuple[tuple[int, int], ...], ...]:
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_atoms)]
    for bidx, bond in enumerate(bonds):
        i, j = bond.endpoints
        adj[i].append((j, bidx))
        adj[j].append((i, bidx))
    return tuple(tuple(neigh) for neigh in adj)


def _find_ring_bonds(n_atoms: int, adjacency) -> set[int]:
    """Bond indices lying on a cycle = non-bridge edges (iterative Tarjan)."""
    disc = [-1] * n_atoms
    low = [0] * n_atoms
    bridges: set[int] = set()
    all_bonds: set[int] = set()
    timer = 0
    for root in range(n_atoms):
        if disc[root] != -1:
            continue
        stack = [(root, -1, 0)]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            node, in_edge, ptr = stack[-1]
            if ptr < len(adjacency[node]):
                stack[-1] = (node, in_edge, ptr + 1)
                nbr, bidx = adjacency[node][ptr]
                all_bonds.add(bidx)
                if bidx == in_edge:
                    continue
                if disc[nbr] == -1:
                    disc[nbr] = low[nbr] = timer
                    timer += 1
                    stack.append((nbr, bidx, 0))
                else:
                    low[node] = min(low[node], disc[nbr])
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(in_edge)
    return all_bonds - bridges


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[dict] = []  # drafts; frozen into Atom at the end
        self.bonds: list[tuple[int, int, str]] = []
        self.bond_pairs: set[tuple[int, int]] = set()
        self.prev: int | None = None
        self.pending: str | None = None  # bond symbol awaiting its second atom
        self.pending_pos = 0
        self.branch_stack: list[tuple[int | None, int, int]] = []  # (anchor, pos, n_bonds)
        self.ring_open: dict[int, tuple[int, str | None, int]] = {}  # digit -> (atom, bond, pos)
        self.dot_pos = 0

    def fail(self, message: str, offset: int | None = None):
        raise SmilesError(message, self.pos if offset is None else offset)

    def parse(self) -> MolecularGraph:
        text = self.text
        n = len(text)
        while self.pos < n:
            ch = text[self.pos]
            if ch == "[":
                self._bracket_atom()
            elif ch in _BOND_SYMBOLS:
                self._bond_symbol(ch)
                self.pos += 1
            elif ch in "/\\":
                # Directional single bonds: stereo discarded, the bond kept.
                self._bond_symbol("-")
                self.pos += 1
            elif ch == "(":
                if self.prev is None:
                    self.fail("branch start before any atom")
                if self.pending is not None:
                    self.fail("bond symbol before branch start", self.pending_pos)
                self.branch_stack.append((self.prev, self.pos, len(self.bonds) + len(self.ring_open)))
                self.pos += 1
            elif ch == ")":
                if not self.branch_stack:
                    self.fail("unbalanced ')'")
                anchor, open_pos, fill = self.branch_stack.pop()
                if len(self.bonds) + len(self.ring_open) == fill and self.pending is None:
                    self.fail("empty branch", open_pos)
                if self.pending is not None:
                    self.fail("dangling bond symbol before ')'", self.pending_pos)
                self.prev = anchor
                self.pos += 1
            elif ch == ".":
                if self.pending is not None:
                    self.fail("bond symbol before '.'", self.pending_pos)
                if self.prev is None:
                    self.fail("'.' must follow an atom")
                self.prev = None
                self.dot_pos = self.pos
                self.pos += 1
            elif ch.isdigit():
                self._ring_closure(int(ch))
                self.pos += 1
            elif ch == "%":
                if self.pos + 2 >= n or not (text[self.pos + 1].isdigit() and text[self.pos + 2].isdigit()):
                    self.fail("'%' must be followed by two digits")
                self._ring_closure(int(text[self.pos + 1 : self.pos + 3]))
                self.pos += 3
            elif ch.isspace():
                self.fail("whitespace inside SMILES")
            else:
                self._organic_atom()
        if self.branch_stack:
            self.fail("unbalanced '('", self.branch_stack[-1][1])
        if self.pending is not None:
            self.fail("dangling bond symbol at end of input", self.pending_pos)
        if self.prev is None and self.atoms:
            self.fail("dangling '.' at end of input", self.dot_pos)
        if self.ring_open:
            digit, (_, _, pos) = sorted(self.ring_open.items())[0]
            raise SmilesError(f"unmatched ring closure {digit}", pos)
        if not self.atoms:
            self.fail("no atoms in SMILES", 0)
        return self._finalize()

    # --- token handlers -------------------------------------------------

    def _bond_symbol(self, ch: str):
        if self.prev is None:
            self.fail("bond symbol with no preceding atom")
        if self.pending is not None:
            self.fail("two consecutive bond symbols")
        self.pending = _BOND_SYMBOLS[ch]
        self.pending_pos = self.pos

    def _organic_atom(self):
        text = self.text
        two = text[self.pos : self.pos + 2]
        if two in _ORGANIC_TWO:
            self._add_atom(element=ATOMIC_NUMBERS[two], aromatic=False)
            self.pos += 2
            return
        ch = text[self.pos]
        if ch in _ORGANIC_ONE:
            self._add_atom(element=ATOMIC_NUMBERS[ch], aromatic=False)
        elif ch in _ORGANIC_AROMATIC:
            self._add_atom(element=ATOMIC_NUMBERS[ch.upper()], aromatic=True)
        else:
            self.fail(f"unknown atom symbol {ch!r}")
        self.pos += 1

    def _parse_bracket_element(self, body: str, i: int, start: int) -> tuple[int, bool, int]:
        sym2 = body[i : i + 2]
        if len(sym2) == 2 and sym2.isalpha():
            if sym2 in ATOMIC_NUMBERS:
                return ATOMIC_NUMBERS[sym2], False, i + 2
            if sym2 in _BRACKET_AROMATIC:
                return ATOMIC_NUMBERS[sym2.capitalize()], True, i + 2
        sym1 = body[i : i + 1]
        if sym1:
            if sym1 in ATOMIC_NUMBERS:
                return ATOMIC_NUMBERS[sym1], False, i + 1
            if sym1 in _BRACKET_AROMATIC:
                return ATOMIC_NUMBERS[sym1.upper()], True, i + 1
        self.fail(f"unknown atom symbol in bracket {body!r}", start + 1 + i)

    def _bracket_atom(self):
        text = self.text
        start = self.pos
        end = text.find("]", start)
        if end == -1:
            self.fail("bracket atom missing closing ']'", start)
        body = text[start + 1 : end]
        if not body:
            self.fail("empty bracket atom", start)
        i = 0
        isotope = None
        if body[:1].isdigit():
            while i < len(body) and body[i].isdigit():
                i += 1
            isotope = int(body[:i])
        element, aromatic, i = self._parse_bracket_element(body, i, start)
        # Chirality markers: accepted, ignored.
        while i < len(body) and body[i] == "@":
            i += 1
            if body[i : i + 2] in ("TH", "AL", "SP", "OH", "TB"):
                i += 2
            while i < len(body) and body[i].isdigit():
                i += 1
        hcount = 0
        if i < len(body) and body[i] == "H":
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            hcount = int(body[i:j]) if j > i else 1
            i = j
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            run = 0
            while i < len(body) and body[i] in "+-":
                if (body[i] == "+") != (sign == 1):
                    self.fail("mixed charge signs in bracket atom", start + 1 + i)
                run += 1
                i += 1
            if i < len(body) and body[i].isdigit():
                if run > 1:
                    self.fail("malformed charge in bracket atom", start + 1 + i)
                j = i
                while j < len(body) and body[j].isdigit():
                    j += 1
                charge = sign * int(body[i:j])
                i = j
            else:
                charge = sign * run
        if i < len(body) and body[i] == ":":
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            if j == i:
                self.fail("malformed atom-class tag", start + 1 + i)
            i = j  # atom-class label: accepted, ignored
        if i != len(body):
            self.fail(f"unexpected {body[i:]!r} in bracket atom", start + 1 + i)
        self._add_atom(element=element, aromatic=aromatic, charge=charge,
                       isotope=isotope, explicit_h=hcount, position=start)
        self.pos = end + 1

    def _add_atom(self, element: int, aromatic: bool, charge: int = 0,
                  isotope: int | None = None, explicit_h: int | None = None,
                  position: int | None = None):
        idx = len(self.atoms)
        self.atoms.append(
            {"element": element, "aromatic": aromatic, "charge": charge,
             "isotope": isotope, "explicit_h": explicit_h,
             "bracket": explicit_h is not None,
             "position": self.pos if position is None else position}
        )
        if self.prev is not None:
            order = self.pending or self._default_order(self.prev, idx)
            self._add_bond(self.prev, idx, order)
        elif self.pending is not None:
            self.fail("bond symbol with no preceding atom", self.pending_pos)
        self.pending = None
        self.prev = idx

    def _default_order(self, i: int, j: int) -> str:
        if self.atoms[i]["aromatic"] and self.atoms[j]["aromatic"]:
            return AROMATIC
        return SINGLE

    def _add_bond(self, i: int, j: int, order: str):
        if i == j:
            self.fail("ring closure bonds an atom to itself")
        key = (min(i, j), max(i, j))
        if key in self.bond_pairs:
            self.fail(f"duplicate bond between atoms {key[0]} and {key[1]}")
        self.bond_pairs.add(key)
        self.bonds.append((key[0], key[1], order))

    def _ring_closure(self, digit: int):
        if self.prev is None:
            self.fail("ring closure digit before any atom")
        if digit in self.ring_open:
            other, open_bond, _ = self.ring_open.pop(digit)
            close_bond = self.pending
            self.pending = None
            if open_bond is not None and close_bond is not None and open_bond != close_bond:
                self.fail(f"conflicting bond orders for ring closure {digit}")
            order = open_bond or close_bond or self._default_order(other, self.prev)
            self._add_bond(other, self.prev, order)
        else:
            self.ring_open[digit] = (self.prev, self.pending, self.pos)
            self.pending = None

    # --- finalization ----------------------------------------------------

    def _merge_explicit_hydrogens(self) -> tuple[list[dict], list[tuple[int, int, str]]]:
        """Fold bracket [H] atoms into their heavy neighbour's hydrogen count."""
        h_idx = [i for i, a in enumerate(self.atoms) if a["element"] == 1]
        if not h_idx:
            return self.atoms, self.bonds
        h_set = set(h_idx)
        partners: dict[int, list[tuple[int, str]]] = {i: [] for i in h_idx}
        for i, j, order in self.bonds:
            if i in h_set:
                partners[i].append((j, order))
            if j in h_set:
                partners[j].append((i, order))
        for hi in h_idx:
            draft = self.atoms[hi]
            links = partners[hi]
            if draft["charge"] != 0 or len(links) != 1 or links[0][1] != SINGLE or links[0][0] in h_set:
                self.fail(
                    "explicit hydrogen atoms must be neutral and singly bonded to one heavy atom",
                    draft["position"],
                )
        merged_count: dict[int, int] = {}
        for hi in h_idx:
            heavy = partners[hi][0][0]
            merged_count[heavy] = merged_count.get(heavy, 0) + 1
        remap: dict[int, int] = {}
        atoms = []
        for i, draft in enumerate(self.atoms):
            if i in h_set:
                continue
            remap[i] = len(atoms)
            d = dict(draft)
            extra = merged_count.get(i, 0)
            if extra:
                d["explicit_h"] = (d["explicit_h"] or 0) + extra
            atoms.append(d)
        bonds = [
            (remap[i], remap[j], order)
            for i, j, order in self.bonds
            if i not in h_set and j not in h_set
        ]
        if not atoms:
            self.fail("no heavy atoms in SMILES", 0)
        return atoms, bonds

    def _finalize(self) -> MolecularGraph:
        drafts, raw_bonds = self._merge_explicit_hydrogens()
        bonds = [Bond(endpoints=(i, j), order=order) for i, j, order in raw_bonds]
        n = len(drafts)
        adjacency = build_adjacency(n, bonds)
        ring_bonds = _find_ring_bonds(n, adjacency)
        atoms = []
        for idx, draft in enumerate(drafts):
            in_ring = any(bidx in ring_bonds for _, bidx in adjacency[idx])
            atoms.append(
                Atom(
                    element=draft["element"],
                    aromatic=draft["aromatic"],
                    charge=draft["charge"],
                    isotope=draft["isotope"],
                    explicit_h=draft["explicit_h"],
                    implicit_h=0,
                    degree=len(adjacency[idx]),
                    in_ring=in_ring,
                    from_bracket=draft["bracket"],
                )
            )
        graph = MolecularGraph(atoms=tuple(atoms), bonds=tuple(bonds), adjacency=adjacency)
        return compute_implicit_hydrogens(graph)


def parse_smiles(text: str) -> MolecularGraph:
    """Parse a SMILES string into a heavy-atom MolecularGraph.

    Implicit hydrogen counts, degrees, and ring membership are filled in.
    Raises SmilesError (with a byte offset) on anything outside the supported
    subset.
    """
    if not text:
        raise SmilesError("empty SMILES string", 0)
    return _Parser(text).parse()


def compute_implicit_hydrogens(graph: MolecularGraph) -> MolecularGraph:
    """Recompute implicit hydrogen counts from default valences.

    Organic-subset atoms get ``max(0, valence - floor(bond_order_sum))``
    hydrogens, aromatic bonds counting 1.5 and merged [H] neighbours 1.0.
    Bracket atoms keep their explicit count verbatim and get no implicit
    hydrogens. Hypervalent atoms clamp to zero rather than failing.
    """
    new_atoms = []
    for idx, atom in enumerate(graph.atoms):
        if atom.from_bracket:
            new_atoms.append(replace(atom, implicit_h=0))
            continue
        order_sum = sum(
            BOND_ORDER_VALUE[graph.bonds[bidx].order] for _, bidx in graph.adjacency[idx]
        )
        order_sum += atom.explicit_h or 0  # merged [H] neighbours occupy valence
        valence = DEFAULT_VALENCES.get(atom.element, 0)
        implicit = max(0, valence - int(order_sum))
        new_atoms.append(replace(atom, implicit_h=implicit))
    return MolecularGraph(atoms=tuple(new_atoms), bonds=graph.bonds, adjacency=graph.adjacency)
