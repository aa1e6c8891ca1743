"""Shared test utilities: synthetic data, brute-force oracles, and a random
equivalent-SMILES rewriter used for renumbering-invariance checks."""

from __future__ import annotations

import itertools

import numpy as np

from graphmbo.smiles import (
    _ELEMENT_SYMBOLS,
    _BRACKET_AROMATIC,
    AROMATIC,
    DOUBLE,
    SINGLE,
    TRIPLE,
    MolecularGraph,
    build_adjacency,
)

# --- synthetic data ---------------------------------------------------------

# Middle fragments: first and last atoms can take one more single bond each.
_MIDDLE_FRAGMENTS = [
    "C", "CC", "CCC", "C(C)C", "CCO", "CN", "COC", "CNC", "C=CC",
    "Cc1ccccc1C", "CC(C)O", "CSC", "C1CC1C", "CC1CCCCC1", "Cc1ccncc1C",
]
# Terminal fragments: only the first atom needs a free valence.
_TERMINAL_FRAGMENTS = [
    "C", "CC", "CCl", "CBr", "C(F)(F)F", "CC=O", "CCO", "CC#N", "Cc1ccccc1",
    "CC(C)C", "C1CCCCC1", "Cc1ccc(N)cc1", "CS", "CCF",
]


def random_smiles(rng: np.random.Generator, n_fragments: int | None = None) -> str:
    """A random valid SMILES built from valence-safe fragments."""
    if n_fragments is None:
        n_fragments = int(rng.integers(2, 7))
    parts = [str(rng.choice(_MIDDLE_FRAGMENTS)) for _ in range(n_fragments - 1)]
    parts.append(str(rng.choice(_TERMINAL_FRAGMENTS)))
    return "".join(parts)


def synthetic_molecule_dataset(n: int, seed: int = 0) -> tuple[list[str], np.ndarray]:
    """Random molecules labeled by a structural property (aromatic ring or not),
    so fingerprints genuinely separate the classes."""
    rng = np.random.default_rng(seed)
    smiles, labels = [], []
    for _ in range(n):
        s = random_smiles(rng)
        smiles.append(s)
        labels.append(1 if "c1" in s else 0)
    return smiles, np.asarray(labels, dtype=np.int64)


def write_dataset_csv(path, smiles, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("smiles,label\n")
        for s, y in zip(smiles, labels):
            fh.write(f"{s},{int(y)}\n")


def two_gaussians(n: int, separation: float = 4.0, dim: int = 2, seed: int = 0):
    """Two unit-variance Gaussian clusters `separation` sigmas apart."""
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.normal(size=(half, dim))
    b = rng.normal(size=(n - half, dim))
    b[:, 0] += separation
    x = np.vstack([a, b])
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(n - half, dtype=np.int64)])
    perm = rng.permutation(n)
    return x[perm], y[perm]


# --- brute-force oracles ----------------------------------------------------

def simplex_projection_oracle(v: np.ndarray) -> np.ndarray:
    """Exact projection by enumerating active sets (KKT conditions)."""
    v = np.asarray(v, dtype=np.float64)
    m = v.shape[0]
    best, best_dist = None, np.inf
    for r in range(1, m + 1):
        for support in itertools.combinations(range(m), r):
            lam = (1.0 - sum(v[i] for i in support)) / r
            x = np.zeros(m)
            for i in support:
                x[i] = v[i] + lam
            if (x[list(support)] < -1e-12).any():
                continue
            if any(v[j] + lam > 1e-12 for j in range(m) if j not in support):
                continue
            dist = float(((x - v) ** 2).sum())
            if dist < best_dist:
                best, best_dist = x, dist
    return best


def auc_concordance_oracle(scores, labels) -> float:
    """O(P*Q) pairwise concordance with half-credit ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))


def rs_oracle(x: np.ndarray, labels: np.ndarray, eps: float = 1e-5):
    """Double-loop evaluation of the residue/similarity formulas."""
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d[i, j] = np.linalg.norm(x[i] - x[j])
    d_max = d.max()
    raw = np.array([sum(d[i, j] for j in range(n) if labels[j] != labels[i]) for i in range(n)])
    r_max = raw.max()
    residue = raw / (r_max + eps)
    similarity = np.zeros(n)
    for i in range(n):
        members = [j for j in range(n) if labels[j] == labels[i]]
        similarity[i] = sum(1 - d[i, j] / (d_max + eps) for j in members) / (len(members) + eps)
    return residue, similarity


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[ri] = rj

    def n_components(self) -> int:
        return len({self.find(i) for i in range(len(self.parent))})


def component_count(weights) -> int:
    """Connected components of a sparse symmetric weight matrix via union-find."""
    coo = weights.tocoo()
    uf = UnionFind(weights.shape[0])
    for i, j in zip(coo.row, coo.col):
        uf.union(int(i), int(j))
    return uf.n_components()


# --- random equivalent-SMILES rewriter --------------------------------------

_ORDER_SYMBOL = {SINGLE: "-", DOUBLE: "=", TRIPLE: "#", AROMATIC: ":"}


def _atom_token(atom) -> str:
    symbol = _ELEMENT_SYMBOLS[atom.element - 1]
    if atom.aromatic:
        if symbol.lower() not in _BRACKET_AROMATIC:
            raise ValueError(f"cannot write aromatic {symbol}")
        symbol = symbol.lower()
    parts = ["["]
    if atom.isotope is not None:
        parts.append(str(atom.isotope))
    parts.append(symbol)
    if atom.total_h:
        parts.append("H" if atom.total_h == 1 else f"H{atom.total_h}")
    if atom.charge > 0:
        parts.append("+" if atom.charge == 1 else f"+{atom.charge}")
    elif atom.charge < 0:
        parts.append("-" if atom.charge == -1 else f"-{atom.charge}")
    parts.append("]")
    return "".join(parts)


def rewrite_smiles(graph: MolecularGraph, rng: np.random.Generator) -> str:
    """Emit an equivalent SMILES with a random atom order and branch order.

    Every atom is written as a bracket atom with its total hydrogen count, so
    the round trip preserves hydrogen tallies exactly; all bonds get explicit
    symbols. Ring-closure digits are allocated per DFS back edge.
    """
    n = graph.n_atoms
    visited = [False] * n
    tree_children: dict[int, list[tuple[int, str]]] = {i: [] for i in range(n)}
    ring_digits: dict[int, list[tuple[int, str, bool]]] = {i: [] for i in range(n)}
    next_digit = 1
    roots = []
    order = list(rng.permutation(n))
    used_tree_edges = set()
    for root in order:
        if visited[root]:
            continue
        roots.append(root)
        visited[root] = True
        stack = [root]
        while stack:
            node = stack.pop()
            neighbors = list(graph.adjacency[node])
            rng.shuffle(neighbors)
            for nbr, bidx in neighbors:
                if not visited[nbr]:
                    visited[nbr] = True
                    tree_children[node].append((nbr, graph.bonds[bidx].order))
                    used_tree_edges.add(bidx)
                    stack.append(nbr)
                elif bidx not in used_tree_edges:
                    used_tree_edges.add(bidx)
                    digit = next_digit
                    next_digit += 1
                    ring_digits[node].append((digit, graph.bonds[bidx].order, False))
                    ring_digits[nbr].append((digit, graph.bonds[bidx].order, True))

    def digit_token(digit: int) -> str:
        return str(digit) if digit < 10 else f"%{digit:02d}"

    def emit(node: int) -> str:
        out = [_atom_token(graph.atoms[node])]
        for digit, bond_order, is_close in ring_digits[node]:
            if is_close:
                out.append(digit_token(digit))
            else:
                out.append(_ORDER_SYMBOL[bond_order] + digit_token(digit))
        children = tree_children[node]
        for i, (child, bond_order) in enumerate(children):
            piece = _ORDER_SYMBOL[bond_order] + emit(child)
            if i < len(children) - 1:
                out.append(f"({piece})")
            else:
                out.append(piece)
        return "".join(out)

    return ".".join(emit(root) for root in roots)


def invariant_atom_multiset(graph: MolecularGraph):
    """Numbering-invariant atom summary used for isomorphism checks."""
    return sorted(
        (a.element, a.charge, a.total_h, a.degree, a.in_ring, a.aromatic, a.isotope or 0)
        for a in graph.atoms
    )


def bond_order_multiset(graph: MolecularGraph):
    return sorted(b.order for b in graph.bonds)


def permute_graph(graph: MolecularGraph, perm: np.ndarray) -> MolecularGraph:
    """Relabel atoms under a permutation; the result is isomorphic by construction."""
    from graphmbo.smiles import Bond

    inv_atoms = [None] * graph.n_atoms
    for old, new in enumerate(perm):
        inv_atoms[new] = graph.atoms[old]
    bonds = [
        Bond(endpoints=(int(perm[b.endpoints[0]]), int(perm[b.endpoints[1]])), order=b.order)
        for b in graph.bonds
    ]
    adjacency = build_adjacency(graph.n_atoms, bonds)
    return MolecularGraph(atoms=tuple(inv_atoms), bonds=tuple(bonds), adjacency=adjacency)
