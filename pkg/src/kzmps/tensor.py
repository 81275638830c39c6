"""Dense complex tensors with optional Z_q charge labels, plus the linear
algebra primitives everything else is built on: pairwise contraction,
charge-resolved truncated SVD, dominant-eigenvalue solves and Hermitian
matrix exponentials.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg


class ConvergenceError(RuntimeError):
    """Iterative solver failed to converge within its budget."""


@dataclass(frozen=True)
class Tensor:
    """Dense complex tensor, stored row-major (C order).

    charges, when present, holds one integer array per leg (values in
    [0, q)).  A charge-covariant tensor has zero entries wherever the leg
    charges of an element do not sum to 0 mod q.
    """

    data: np.ndarray
    charges: tuple = None
    q: int = 1

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=complex))
        if self.charges is not None:
            if self.q < 2:
                raise ValueError("charged tensor needs q >= 2")
            charges = tuple(np.asarray(c, dtype=int) % self.q for c in self.charges)
            if len(charges) != self.data.ndim:
                raise ValueError("need one charge array per leg")
            for leg, c in enumerate(charges):
                if c.shape != (self.data.shape[leg],):
                    raise ValueError(f"charge array on leg {leg} has wrong length")
            object.__setattr__(self, "charges", charges)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim


def charge_defect(t: Tensor) -> float:
    """Largest |entry| sitting outside the allowed charge sectors (0 if uncharged)."""
    if t.charges is None:
        return 0.0
    total = np.zeros(t.shape, dtype=int)
    for leg, c in enumerate(t.charges):
        shape = [1] * t.ndim
        shape[leg] = -1
        total = total + c.reshape(shape)
    bad = (total % t.q) != 0
    if not bad.any():
        return 0.0
    return float(np.abs(t.data[bad]).max())


def contract(a: Tensor, b: Tensor, pairs) -> Tensor:
    """Contract tensor a with tensor b over the given (leg_a, leg_b) pairs.

    Result legs are the unpaired legs of a followed by those of b.  Paired
    legs must match in dimension and, when both tensors are charged, carry
    complementary charge labels.
    """
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    for ia, ib in pairs:
        if a.shape[ia] != b.shape[ib]:
            raise ValueError(
                f"dimension mismatch on pair ({ia},{ib}): {a.shape[ia]} vs {b.shape[ib]}"
            )
    charged = a.charges is not None and b.charges is not None
    if charged:
        if a.q != b.q:
            raise ValueError("charge modulus mismatch")
        for ia, ib in pairs:
            if np.any((a.charges[ia] + b.charges[ib]) % a.q != 0):
                raise ValueError(f"charge mismatch on paired legs ({ia},{ib})")
    data = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    if not charged:
        return Tensor(data)
    out = [a.charges[i] for i in range(a.ndim) if i not in axes_a]
    out += [b.charges[i] for i in range(b.ndim) if i not in axes_b]
    return Tensor(data, charges=tuple(out), q=a.q)


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Truncated singular-value spectrum of a bond.

    values are sorted non-increasing and normalized to unit 2-norm;
    sector carries one Z_q charge label per value (None when uncharged);
    discarded_weight is the raw sum of squares of the dropped values.
    """

    values: np.ndarray
    sector: np.ndarray = None
    discarded_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.sector is not None:
            object.__setattr__(self, "sector", np.asarray(self.sector, dtype=int))

    def __len__(self):
        return len(self.values)

    def entropy(self) -> float:
        p = self.values[self.values > 1e-150] ** 2
        return float(-np.sum(p * np.log(p)))


DEGENERACY_RTOL = 1e-10


def _kept_count(vals: np.ndarray, chi_max: int) -> int:
    """Number of values to keep under chi_max with the kept-multiplet rule.

    A group of values equal within relative 1e-10 is never split: if the
    chi_max boundary would cut through one, the whole group is dropped.
    The rule is waived if it would empty the kept set.
    """
    if len(vals) <= chi_max:
        return len(vals)
    keep = chi_max
    # walk back while the boundary sits inside a near-degenerate run
    while keep > 0 and vals[keep - 1] - vals[keep] <= DEGENERACY_RTOL * vals[keep - 1]:
        keep -= 1
    if keep == 0:
        return chi_max
    return keep


def svd_truncate(theta: Tensor, chi_max: int, cutoff: float):
    """Truncated SVD of a two-leg tensor, block-wise per charge sector.

    Keeps at most chi_max singular values, dropping those below
    cutoff * s_max, with ties broken deterministically by (value desc,
    charge asc).  Returns (U, spectrum, V) with theta ~= U @ diag(s) @ V
    up to the overall normalization of the spectrum.
    """
    if theta.ndim != 2:
        raise ValueError("svd_truncate expects a two-leg tensor")
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    m, n = theta.shape
    charged = theta.charges is not None

    blocks = []  # (sector, row_idx, col_idx, u, s, vh)
    if charged:
        rc, cc = theta.charges
        q = theta.q
        for s in range(q):
            rows = np.nonzero(rc == s)[0]
            cols = np.nonzero(cc == (-s) % q)[0]
            if len(rows) == 0 or len(cols) == 0:
                continue
            u, sv, vh = np.linalg.svd(theta.data[np.ix_(rows, cols)], full_matrices=False)
            blocks.append((s, rows, cols, u, sv, vh))
    else:
        u, sv, vh = np.linalg.svd(theta.data, full_matrices=False)
        blocks.append((0, np.arange(m), np.arange(n), u, sv, vh))

    all_vals = np.concatenate([b[4] for b in blocks])
    all_sect = np.concatenate([np.full(len(b[4]), b[0]) for b in blocks])
    all_block = np.concatenate([np.full(len(b[4]), i) for i, b in enumerate(blocks)])
    all_pos = np.concatenate([np.arange(len(b[4])) for b in blocks])

    order = np.lexsort((all_sect, -all_vals))
    all_vals = all_vals[order]
    all_sect = all_sect[order]
    all_block = all_block[order]
    all_pos = all_pos[order]

    s_max = all_vals[0] if len(all_vals) else 0.0
    if s_max <= 0.0:
        raise ValueError("all singular values below cutoff")
    above = all_vals >= cutoff * s_max
    if not above.any():
        raise ValueError("all singular values below cutoff")
    n_cut = int(np.nonzero(above)[0][-1]) + 1

    keep = _kept_count(all_vals[:n_cut], chi_max)
    kept_vals = all_vals[:keep]
    discarded = float(np.sum(all_vals[keep:] ** 2))
    norm = float(np.linalg.norm(kept_vals))

    U = np.zeros((m, keep), dtype=complex)
    V = np.zeros((keep, n), dtype=complex)
    for k in range(keep):
        _, rows, cols, u, _, vh = blocks[all_block[k]]
        U[rows, k] = u[:, all_pos[k]]
        V[k, cols] = vh[all_pos[k], :]

    spectrum = SchmidtSpectrum(
        kept_vals / norm,
        sector=all_sect[:keep] if charged else None,
        discarded_weight=discarded,
    )
    if charged:
        q = theta.q
        u_t = Tensor(U, charges=(theta.charges[0], (-all_sect[:keep]) % q), q=q)
        v_t = Tensor(V, charges=(all_sect[:keep] % q, theta.charges[1]), q=q)
    else:
        u_t = Tensor(U)
        v_t = Tensor(V)
    return u_t, spectrum, v_t


def _start_vector(dim: int) -> np.ndarray:
    v = np.cos(0.7 * np.arange(dim)) + 0.5
    return v / np.linalg.norm(v)


def _as_matvec(op, dim):
    if callable(op):
        return op
    mat = np.asarray(op)
    if mat.shape != (dim, dim):
        raise ValueError("matrix shape does not match dim")
    return lambda v: mat @ v


def _materialize(matvec, dim) -> np.ndarray:
    cols = [matvec(col) for col in np.eye(dim, dtype=complex).T]
    return np.array(cols).T


def dominant_eigenvalue(op, dim: int, tol: float = 1e-12, max_iter: int = 10000,
                        dense_dim: int = 256):
    """Largest-magnitude eigenvalue and eigenvector of a linear map.

    op is a matrix-vector callable (or a dense matrix).  Small problems
    (dim <= dense_dim) are solved densely; larger ones by power iteration
    with a fixed deterministic start vector.  The map may be non-Hermitian.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    matvec = _as_matvec(op, dim)
    if dim <= dense_dim:
        mat = np.asarray(op) if not callable(op) else _materialize(matvec, dim)
        vals, vecs = np.linalg.eig(mat)
        i = int(np.argmax(np.abs(vals)))
        vec = vecs[:, i]
        return complex(vals[i]), _fix_phase(vec)

    v = _start_vector(dim).astype(complex)
    rho_prev = None
    hits = 0
    for _ in range(max_iter):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0 + 0.0j, v
        rho = complex(np.vdot(v, w))
        v = w / nw
        if rho_prev is not None and abs(rho - rho_prev) <= tol * max(1.0, abs(rho)):
            hits += 1
            if hits >= 3:
                return rho, _fix_phase(v)
        else:
            hits = 0
        rho_prev = rho
    raise ConvergenceError(
        "power iteration did not converge (possibly degenerate leading magnitudes)"
    )


def _fix_phase(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    ph = v[i] / abs(v[i]) if v[i] != 0 else 1.0
    return v / ph


def eigs_magnitude(matvec, dim: int, k: int, dense_dim: int = 1024, mat=None) -> np.ndarray:
    """Top-k eigenvalues by magnitude of a linear map, sorted descending.

    Dense solve below dense_dim, ARPACK with a fixed start vector above;
    deterministic either way.  mat, if given, is the pre-materialized
    dense matrix used on the dense path.
    """
    k = min(k, dim)
    if dim <= dense_dim or k >= dim - 1:
        if mat is None:
            mat = _materialize(matvec, dim)
        vals = np.linalg.eigvals(mat)
        order = np.argsort(-np.abs(vals), kind="stable")
        return vals[order][:k]
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec, dtype=complex)
    vals = scipy.sparse.linalg.eigs(
        op, k=k, which="LM", v0=_start_vector(dim), return_eigenvectors=False
    )
    order = np.argsort(-np.abs(vals), kind="stable")
    return vals[order]


def dominant_pair(matvec, dim: int, dense_dim: int = 256):
    """Dominant (eigenvalue, eigenvector), ARPACK-backed above the dense cutoff."""
    if dim <= dense_dim:
        return dominant_eigenvalue(matvec, dim, dense_dim=dense_dim)
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec, dtype=complex)
    try:
        vals, vecs = scipy.sparse.linalg.eigs(op, k=1, which="LM", v0=_start_vector(dim))
        return complex(vals[0]), _fix_phase(vecs[:, 0])
    except scipy.sparse.linalg.ArpackNoConvergence:
        return dominant_eigenvalue(matvec, dim, dense_dim=dense_dim)


def hermitian_exponential(h, scale: complex) -> Tensor:
    """exp(scale * h) of a Hermitian two-leg tensor via eigendecomposition.

    Charged inputs are exponentiated block-wise per charge sector, so the
    result is exactly zero outside the allowed sectors.
    """
    t = h if isinstance(h, Tensor) else Tensor(np.asarray(h, dtype=complex))
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("expected a square two-leg tensor")
    a = t.data
    hnorm = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.conj().T).max() > 1e-12 * hnorm:
        raise ValueError("input is not Hermitian to 1e-12")

    if t.charges is None:
        w, u = np.linalg.eigh(a)
        out = (u * np.exp(scale * w)) @ u.conj().T
        return Tensor(out)

    rc, cc = t.charges
    if np.any((rc + cc) % t.q != 0):
        # legs must pair the same space with complementary labels
        raise ValueError("row/col charges are not complementary")
    out = np.zeros_like(a)
    for s in np.unique(rc):
        idx = np.nonzero(rc == s)[0]
        w, u = np.linalg.eigh(a[np.ix_(idx, idx)])
        out[np.ix_(idx, idx)] = (u * np.exp(scale * w)) @ u.conj().T
    return Tensor(out, charges=t.charges, q=t.q)
