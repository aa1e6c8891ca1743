"""Spectrally truncated diffusion-threshold (MBO) label propagation.

One run alternates three steps on the label matrix U (rows on the unit
simplex, one row per data point):

1. Diffusion with fidelity: n_substeps implicit-Euler steps of the graph
   heat equation with a forcing term pinning labeled rows toward their known
   class, carried out on the leading Laplacian eigenbasis. With coefficients
   A = Phi^T U and forcing B = C * Phi^T(Gamma o (U - U0)), each substep is

       A <- (A - (dt/n_substeps) B) / (1 + (dt/n_substeps) Lambda),

   the division elementwise per eigenmode, followed by U <- Phi A and a
   recomputation of B from the fresh U.
2. Projection: each row is projected onto the unit simplex.
3. Displacement: each row moves to its nearest simplex vertex.

The displaced labels seed the next diffusion (A and B are re-expanded from
the thresholded U), which is what makes this threshold dynamics rather than
plain linear diffusion. The returned probabilities are the final iteration's
post-projection, pre-displacement rows: the only non-degenerate simplex
values available, and what the consensus combiner averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import SplitSpec
from .spectral import SpectralDecomposition


class MboDivergedError(RuntimeError):
    """Non-finite values appeared mid-run, usually dt * fidelity too large."""

    def __init__(self, iteration: int):
        super().__init__(
            f"non-finite values at iteration {iteration}: reduce dt or the fidelity strength"
        )
        self.iteration = iteration


@dataclass(frozen=True)
class MboParams:
    """Diffusion-threshold dynamics parameters.

    fidelity is the forcing strength C; dt the diffusion time step; n_iters
    the number of diffuse/project/displace cycles; n_substeps how many times
    the diffusion operator is applied per cycle (3 unless there is a reason
    to deviate); seed drives the random initialization of unlabeled rows.
    """

    fidelity: float
    dt: float
    n_iters: int
    n_classes: int
    n_substeps: int = 3
    seed: int = 0
    stop_when_stable: bool = False

    def __post_init__(self):
        if self.fidelity <= 0:
            raise ValueError("fidelity must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_iters < 0:
            raise ValueError("n_iters must be >= 0")
        if self.n_substeps < 1:
            raise ValueError("n_substeps must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")


@dataclass(frozen=True)
class MboOutput:
    probabilities: np.ndarray  # (n, m), rows on the simplex, pre-displacement
    hard_labels: np.ndarray  # (n,), argmax per row, ties to the lowest class
    iterations_run: int

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probabilities, dtype=np.float64)
        hard = np.ascontiguousarray(self.hard_labels, dtype=np.int64)
        probs.flags.writeable = False
        hard.flags.writeable = False
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "hard_labels", hard)


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the unit simplex."""
    return project_rows_to_simplex(np.asarray(v, dtype=np.float64)[None, :])[0]


def project_rows_to_simplex(v: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean projection onto the unit simplex.

    Sorting-based exact algorithm: with u the row sorted descending and
    rho the largest k such that u_k + (1 - sum_{i<=k} u_i) / k > 0, the
    projection is max(v - theta, 0) with theta = (sum_{i<=rho} u_i - 1) / rho.
    The binary case collapses to projecting onto the segment between the two
    vertices, a clip with no sort.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValueError("cannot project non-finite values")
    rows, m = v.shape
    if m == 2:
        p = np.clip((v[:, 0] - v[:, 1] + 1.0) * 0.5, 0.0, 1.0)
        return np.stack([p, 1.0 - p], axis=1)
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, m + 1, dtype=np.float64)
    rho = m - 1 - np.argmax((u - css / ks > 0)[:, ::-1], axis=1)
    theta = css[np.arange(rows), rho] / (rho + 1.0)
    return np.maximum(v - theta[:, None], 0.0)


def displace_to_vertices(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Replace each row by its nearest simplex vertex (the argmax class)."""
    hard = np.argmax(u, axis=1)
    return np.eye(u.shape[1])[hard], hard


def initial_label_matrix(
    n: int, n_classes: int, labels: np.ndarray, gamma: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Uniform-random start with labeled rows pinned to their class vertex.

    Every entry is drawn from (0,1); labeled rows are then overwritten with
    their unit vector and all rows projected to the simplex (which leaves the
    labeled rows exactly on their vertex).
    """
    u0 = rng.uniform(size=(n, n_classes))
    labeled = np.flatnonzero(gamma == 1)
    u0[labeled] = np.eye(n_classes)[labels[labeled]]
    return project_rows_to_simplex(u0)


def _check_inputs(decomp: SpectralDecomposition, split: SplitSpec, labels: np.ndarray, params: MboParams):
    n = decomp.n
    if split.gamma.shape[0] != n:
        raise ValueError(f"split covers {split.gamma.shape[0]} points, decomposition {n}")
    if labels.shape[0] != n:
        raise ValueError(f"{labels.shape[0]} labels for {n} points")
    labeled = np.flatnonzero(split.gamma == 1)
    bad = (labels[labeled] < 0) | (labels[labeled] >= params.n_classes)
    if bad.any():
        raise ValueError("labeled points carry class indices outside [0, n_classes)")


def mbo_classify(
    decomp: SpectralDecomposition,
    split: SplitSpec,
    labels: np.ndarray,
    params: MboParams,
    u0: np.ndarray | None = None,
) -> MboOutput:
    """Run the diffusion-threshold dynamics for one labeled/unlabeled split.

    `u0` overrides the random initialization (rows must already lie on the
    simplex with labeled rows at their vertices); it exists for oracle tests
    and permutation-equivariance checks.
    """
    labels = np.asarray(labels, dtype=np.int64)
    _check_inputs(decomp, split, labels, params)
    batch = MboBatch(
        decomp,
        gamma=split.gamma[None, :].astype(np.float64),
        labels=labels,
        n_classes=params.n_classes,
        seeds=(params.seed,),
        u0_stack=None if u0 is None else np.asarray(u0, dtype=np.float64)[None, :, :],
    )
    return batch.run(params, stop_when_stable=params.stop_when_stable)[0][0]


def mbo_classify_many(
    decomp: SpectralDecomposition,
    splits,
    labels: np.ndarray,
    params: MboParams,
    checkpoints: tuple[int, ...] | None = None,
) -> list[list[MboOutput]]:
    """Run many splits of the same problem in one batched pass.

    All splits share the decomposition and labels; each split's random
    initialization is seeded by its own `split.seed`, so results match
    `mbo_classify` run per split with ``params.seed = split.seed``. With
    `checkpoints` (ascending iteration counts, final value replacing
    params.n_iters) the run also snapshots intermediate outputs, so one pass
    serves several n_iters grid values. Returns one list per checkpoint, each
    with one MboOutput per split.
    """
    labels = np.asarray(labels, dtype=np.int64)
    for split in splits:
        _check_inputs(decomp, split, labels, params)
    if params.stop_when_stable:
        per_split = [
            mbo_classify(decomp, s, labels, replace_seed(params, s.seed)) for s in splits
        ]
        return [per_split]
    batch = prepare_batch(decomp, splits, labels, params.n_classes)
    return batch.run(params, checkpoints)


def replace_seed(params: MboParams, seed: int) -> MboParams:
    from dataclasses import replace

    return replace(params, seed=seed)


def prepare_batch(decomp: SpectralDecomposition, splits, labels: np.ndarray, n_classes: int) -> "MboBatch":
    """Precompute everything shared by runs over the same splits.

    A hyperparameter sweep calls this once per decomposition and then runs
    each (fidelity, dt, n_iters) cell against the same prepared state: the
    random initializations, the labeled projectors, and the fixed spectral
    expansions do not depend on those parameters.
    """
    gamma = np.stack([s.gamma for s in splits]).astype(np.float64)
    seeds = tuple(s.seed for s in splits)
    labels = np.asarray(labels, dtype=np.int64)
    return MboBatch(decomp, gamma, labels, n_classes, seeds, None)


def _labeled_projectors(phi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Per-split matrices Phi^T diag(gamma_s) Phi, shape (s, ne, ne).

    While U = Phi A stays on the eigenbasis span, the fidelity term
    Phi^T(Gamma o (U - U0)) equals M_s A minus a constant, so the inner
    diffusion substeps never need to materialize U. Splits labeling more than
    half the points use the complement identity to keep the build cheap.
    """
    s, n = gamma.shape
    ne = phi.shape[1]
    out = np.empty((s, ne, ne))
    gram = None
    for i in range(s):
        labeled = np.flatnonzero(gamma[i] == 1)
        if labeled.size * 2 <= n:
            sub = phi[labeled]
            out[i] = sub.T @ sub
        else:
            if gram is None:
                gram = phi.T @ phi
            sub = phi[np.flatnonzero(gamma[i] == 0)]
            out[i] = gram - sub.T @ sub
    return out


def _composite_substeps(m_proj: np.ndarray, e_inv: np.ndarray, c2: float, n_substeps: int):
    """Collapse the per-iteration diffusion substeps into one affine map.

    With D = diag(1 / (1 + tau * Lambda)) and K = D(I - tau*fidelity*M), the
    substep recursion A <- D(A - tau*B), B <- fidelity*(M A - P) telescopes to

        A_out = K^(n_substeps-1) @ D(A_in - tau*B_in) + (sum_j K^j) tau*D P,

    so an iteration costs one batched (ne x ne) product instead of
    n_substeps of them. Returns (K^(n_substeps-1), sum_{j<n_substeps-1} K^j).
    Matrix powers run as one dgemm per split: BLAS beats numpy's stacked
    matmul severalfold at these shapes.
    """
    s, ne, _ = m_proj.shape
    eye = np.eye(ne)
    k = (eye[None, :, :] - c2 * m_proj) * e_inv[None, :, None]
    power = np.broadcast_to(eye, (s, ne, ne)).copy()
    geom = np.zeros((s, ne, ne))
    for _ in range(n_substeps - 1):
        geom += power
        for i in range(s):
            power[i] = k[i] @ power[i]
    return power, geom


def _collect(u_flat: np.ndarray, n: int, s: int, m: int, iterations: int) -> list[MboOutput]:
    stack = u_flat.reshape(n, s, m)
    outputs = []
    for i in range(s):
        probs = np.ascontiguousarray(stack[:, i, :])
        hard = np.argmax(probs, axis=1)
        outputs.append(MboOutput(probabilities=probs, hard_labels=hard, iterations_run=iterations))
    return outputs


class MboBatch:
    """Prepared state for batched MBO runs over a fixed set of splits."""

    def __init__(self, decomp, gamma, labels, n_classes, seeds, u0_stack):
        phi = decomp.eigenvectors
        self.decomp = decomp
        self.phi = phi
        self.lam = decomp.eigenvalues
        self.n = phi.shape[0]
        self.ne = phi.shape[1]
        self.m = n_classes
        self.s = gamma.shape[0]
        n, m, s = self.n, self.m, self.s
        if u0_stack is None:
            u0_stack = np.empty((s, n, m))
            for i, seed in enumerate(seeds):
                rng = np.random.Generator(np.random.PCG64(seed))
                u0_stack[i] = initial_label_matrix(n, m, labels, gamma[i], rng)
        # Layout (n, s*m): one dgemm per step instead of one per split.
        self.u0 = np.ascontiguousarray(u0_stack.transpose(1, 0, 2)).reshape(n, s * m)
        self.gamma_t = np.ascontiguousarray(gamma.T)  # (n, s)
        self.g = np.repeat(self.gamma_t, m, axis=1)  # (n, s*m)
        self.m_proj = _labeled_projectors(phi, gamma)
        self.base_p = phi.T @ (self.g * self.u0)  # (ne, s*m), fidelity factored out
        self.a0 = phi.T @ self.u0
        self.phi_col_sums = phi.sum(axis=0)  # Phi^T @ 1
        self.phi_t_gamma = phi.T @ self.gamma_t  # (ne, s)

    def run(
        self,
        params: MboParams,
        checkpoints: tuple[int, ...] | None = None,
        stop_when_stable: bool = False,
    ) -> list[list[MboOutput]]:
        if checkpoints is None:
            checkpoints = (params.n_iters,)
        if list(checkpoints) != sorted(set(checkpoints)) or checkpoints[-1] != params.n_iters:
            raise ValueError("checkpoints must be strictly ascending and end at params.n_iters")
        if params.n_classes != self.m:
            raise ValueError("params.n_classes differs from the prepared batch")
        phi, n, m, s, ne = self.phi, self.n, self.m, self.s, self.ne
        tau = params.dt / params.n_substeps
        c2 = tau * params.fidelity
        e_inv = 1.0 / (1.0 + tau * self.lam)  # (ne,)
        with np.errstate(over="ignore", invalid="ignore"):
            p_const = params.fidelity * self.base_p
            w_comp, w_geom = _composite_substeps(self.m_proj, e_inv, c2, params.n_substeps)
            p3 = np.ascontiguousarray(p_const.reshape(ne, s, m).transpose(1, 0, 2))
            sub_const = np.matmul(w_geom, tau * e_inv[None, :, None] * p3)  # (s, ne, m)

        def advance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
            # All diffusion substeps of one iteration, in coefficient space.
            x = (a - tau * b) * e_inv[:, None]
            if params.n_substeps == 1:
                return x
            x3 = np.ascontiguousarray(x.reshape(ne, s, m).transpose(1, 0, 2))
            out = np.matmul(w_comp, x3) + sub_const
            return np.ascontiguousarray(out.transpose(1, 0, 2)).reshape(ne, s * m)

        binary = m == 2
        if binary:
            p3v = p_const.reshape(ne, s, m)
            p_class0, p_class1 = p3v[:, :, 0], p3v[:, :, 1]
        eye_m = np.eye(m)
        a = self.a0.copy()
        b = np.zeros_like(a)  # fidelity term is zero while U == U0
        reached: dict[int, list[MboOutput]] = {}
        proj_wide = self.u0  # reported when the loop never runs (n_iters == 0)
        proj_class0 = None
        prev_hard = None
        stable_for = 0
        iterations = 0
        for it in range(params.n_iters):
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught below
                a = advance(a, b)
                if binary:
                    # Only the class difference is needed to project and
                    # threshold: the projected row is (p, 1-p) with
                    # p = clip((v0 - v1 + 1)/2, 0, 1).
                    a3 = a.reshape(ne, s, m)
                    delta = phi @ np.ascontiguousarray(a3[:, :, 0] - a3[:, :, 1])  # (n, s)
                else:
                    u = phi @ a
            if not np.isfinite(delta if binary else u).all():
                raise MboDivergedError(it + 1)
            iterations = it + 1
            if binary:
                p = np.clip((delta + 1.0) * 0.5, 0.0, 1.0)
                proj_class0, proj_wide = p, None
                if iterations in checkpoints:
                    reached[iterations] = _collect(_wide_from_class0(p), n, s, m, iterations)
                hard = (p < 0.5).astype(np.int64)  # ties go to class 0
                h1 = hard.astype(np.float64)
                q = phi.T @ h1  # (ne, s)
                a3 = np.empty((ne, s, 2))
                a3[:, :, 0] = self.phi_col_sums[:, None] - q
                a3[:, :, 1] = q
                a = a3.reshape(ne, s * m)
                r = phi.T @ (self.gamma_t * h1)  # (ne, s)
                b3 = np.empty((ne, s, 2))
                b3[:, :, 0] = params.fidelity * (self.phi_t_gamma - r) - p_class0
                b3[:, :, 1] = params.fidelity * r - p_class1
                b = b3.reshape(ne, s * m)
            else:
                u = project_rows_to_simplex(u.reshape(-1, m)).reshape(n, s * m)
                proj_wide, proj_class0 = u, None
                if iterations in checkpoints:
                    reached[iterations] = _collect(proj_wide, n, s, m, iterations)
                hard = np.argmax(u.reshape(n, s, m), axis=2)
                u = eye_m[hard].reshape(n, s * m)
                # The displaced U leaves the eigenbasis span, so re-expand A
                # and take the forcing from the actual thresholded labels.
                a = phi.T @ u
                b = params.fidelity * (phi.T @ (self.g * u)) - p_const
            if stop_when_stable:
                if prev_hard is not None and np.array_equal(hard, prev_hard):
                    stable_for += 1
                    if stable_for >= 5:
                        break
                else:
                    stable_for = 0
                prev_hard = hard
        # Checkpoints not reached (n_iters == 0 or an early stop) report the
        # last projected, pre-displacement state.
        if proj_wide is None:
            proj_wide = _wide_from_class0(proj_class0)
        return [
            reached.get(cp, None) or _collect(proj_wide, n, s, m, iterations)
            for cp in checkpoints
        ]


def _wide_from_class0(p: np.ndarray) -> np.ndarray:
    n, s = p.shape
    out = np.empty((n, s * 2))
    out[:, 0::2] = p
    out[:, 1::2] = 1.0 - p
    return out


def consensus(a: MboOutput, b: MboOutput) -> MboOutput:
    """Average two probability matrices and re-threshold by row argmax."""
    if a.probabilities.shape != b.probabilities.shape:
        raise ValueError(
            f"shape mismatch: {a.probabilities.shape} vs {b.probabilities.shape}"
        )
    probs = (a.probabilities + b.probabilities) * 0.5
    hard = np.argmax(probs, axis=1)
    return MboOutput(
        probabilities=probs,
        hard_labels=hard,
        iterations_run=max(a.iterations_run, b.iterations_run),
    )
