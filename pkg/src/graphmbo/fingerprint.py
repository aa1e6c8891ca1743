"""Folded extended-connectivity fingerprints from molecular graphs.

Each atom starts from an identifier hashed over its numbering-invariant
properties; d/2 update rounds then rehash every identifier together with the
sorted (bond code, neighbour identifier) list, so identifiers describe
progressively larger circular neighbourhoods. The union of identifiers from
all rounds, deduplicated as a set, is folded modulo the bit length.

Fingerprints are named by diameter: a diameter-4 fingerprint runs 2 rounds.
Identifier hashing uses a fixed 64-bit mix (splitmix64 finalizer chain over
the value sequence), so fingerprints are bit-reproducible across platforms
and process restarts. Bit-compatibility with any external toolkit is not a
goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smiles import MolecularGraph, parse_smiles

BOND_CODES = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}

_M64 = (1 << 64) - 1


def _mix64(h: int, v: int) -> int:
    # One splitmix64 finalizer round folding v into the running state h.
    h = (h + (v & _M64)) & _M64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _M64
    return h ^ (h >> 31)


def hash_ints(values) -> int:
    """Deterministic 64-bit hash of an integer sequence (order-sensitive)."""
    h = 0x9E3779B97F4A7C15
    count = 0
    for v in values:
        h = _mix64(h, int(v))
        count += 1
    return _mix64(h, count)


@dataclass(frozen=True)
class EcfpParams:
    """Fingerprint shape: even diameter (2 * rounds) and power-of-two length."""

    diameter: int = 4
    n_bits: int = 1024

    def __post_init__(self):
        if self.diameter < 0 or self.diameter % 2 != 0:
            raise ValueError(f"diameter must be a non-negative even integer, got {self.diameter}")
        if self.n_bits <= 0 or (self.n_bits & (self.n_bits - 1)) != 0:
            raise ValueError(f"n_bits must be a power of two, got {self.n_bits}")

    @property
    def n_rounds(self) -> int:
        return self.diameter // 2

    @property
    def name(self) -> str:
        return f"ECFP{self.diameter}_{self.n_bits}"


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray  # 0/1 vector of length n_bits
    feature_ids: frozenset[int]  # pre-fold identifiers, kept for diagnostics

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())


def initial_identifiers(graph: MolecularGraph) -> list[int]:
    """One 64-bit identifier per heavy atom from its invariant tuple.

    The tuple is (atomic number, heavy degree, total H count, formal charge,
    in-ring flag, aromatic flag, isotope or 0); identical tuples hash
    identically, so symmetric atoms share an identifier.
    """
    ids = []
    for atom in graph.atoms:
        ids.append(
            hash_ints(
                (
                    atom.element,
                    atom.degree,
                    atom.total_h,
                    atom.charge,
                    int(atom.in_ring),
                    int(atom.aromatic),
                    atom.isotope or 0,
                )
            )
        )
    return ids


def fold(ids, n_bits: int) -> np.ndarray:
    """Fold integer feature identifiers into a 0/1 vector via id mod n_bits."""
    if n_bits <= 0:
        raise ValueError("n_bits must be positive")
    bits = np.zeros(n_bits, dtype=np.uint8)
    for i in ids:
        bits[i % n_bits] = 1
    return bits


def ecfp(graph: MolecularGraph, params: EcfpParams) -> Fingerprint:
    """Extended-connectivity fingerprint of a molecular graph.

    Runs diameter/2 neighbourhood-update rounds; the feature set is the union
    of initial, intermediate, and final identifiers with duplicates removed.
    Disconnected fragments are fingerprinted jointly. An empty molecule yields
    the all-zero fingerprint.
    """
    ids = initial_identifiers(graph)
    features = set(ids)
    bond_code = [BOND_CODES[b.order] for b in graph.bonds]
    for round_no in range(1, params.n_rounds + 1):
        new_ids = []
        for idx in range(graph.n_atoms):
            pairs = sorted((bond_code[bidx], ids[nbr]) for nbr, bidx in graph.adjacency[idx])
            seq = [round_no, ids[idx]]
            for code, nid in pairs:
                seq.append(code)
                seq.append(nid)
            new_ids.append(hash_ints(seq))
        ids = new_ids
        features.update(ids)
    return Fingerprint(bits=fold(features, params.n_bits), feature_ids=frozenset(features))


def ecfp_from_smiles(text: str, params: EcfpParams) -> Fingerprint:
    return ecfp(parse_smiles(text), params)


def ecfp_matrix(smiles_list, params: EcfpParams) -> np.ndarray:
    """Stack fingerprints for a list of SMILES into an (n, n_bits) 0/1 matrix.

    Parse errors are re-raised with the offending list index prepended.
    """
    out = np.zeros((len(smiles_list), params.n_bits), dtype=np.uint8)
    for i, smi in enumerate(smiles_list):
        try:
            out[i] = ecfp(parse_smiles(smi), params).bits
        except ValueError as exc:
            raise ValueError(f"molecule {i} ({smi!r}): {exc}") from exc
    return out
