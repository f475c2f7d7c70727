"""Dense matrix kernel for SU(n) and su(n).

All matrices are plain ``numpy`` complex arrays of shape ``(n, n)``.  The
helpers here check group/algebra membership, build the sparse generators
used throughout the package, and provide the exponential, eigen-phase and
rank primitives the planner relies on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

TAU_UNITARY = 1e-9
TAU_DET = 1e-9
TAU_SKEW = 1e-12
TAU_TRACE = 1e-12
TAU_EIG = 1e-9
RANK_TOL = 1e-8


class MembershipError(ValueError):
    """A matrix failed an SU(n) / su(n) membership check."""


class EigenDecompositionError(RuntimeError):
    pass


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def fidelity_V(x: np.ndarray) -> float:
    """Real part of the trace."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    return float(np.trace(x).real)


def frob(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def unitarity_defect(x: np.ndarray) -> float:
    n = x.shape[0]
    return frob(dag(x) @ x - np.eye(n))


def det_defect(x: np.ndarray) -> float:
    return float(abs(np.linalg.det(x) - 1.0))


def is_special_unitary(x: np.ndarray, tol_unitary: float = TAU_UNITARY, tol_det: float = TAU_DET) -> bool:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or not np.all(np.isfinite(x)):
        return False
    return unitarity_defect(x) <= tol_unitary and det_defect(x) <= tol_det


def is_su_element(a: np.ndarray, tol_skew: float = TAU_SKEW, tol_trace: float = TAU_TRACE) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.all(np.isfinite(a)):
        return False
    return frob(a + dag(a)) <= tol_skew and abs(np.trace(a)) <= tol_trace


def check_special_unitary(x: np.ndarray, name: str = "matrix", **tols) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if not is_special_unitary(x, **tols):
        raise MembershipError(
            f"{name} is not in SU(n): unitarity defect {unitarity_defect(x):.3e}, "
            f"|det-1| = {det_defect(x):.3e}"
        )
    return x


def check_su_element(a: np.ndarray, name: str = "matrix", tol_skew: float = TAU_SKEW,
                     tol_trace: float = TAU_TRACE) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if not is_su_element(a, tol_skew, tol_trace):
        raise MembershipError(
            f"{name} is not in su(n): |A+A^H| = {frob(a + dag(a)):.3e}, |tr A| = {abs(np.trace(a)):.3e}"
        )
    return a


def normalize_det(x: np.ndarray, tol_det: float = TAU_DET, tol_unitary: float = TAU_UNITARY) -> np.ndarray:
    """Phase-correct a near-SU(n) matrix by ``det(x)**(-1/n)``.

    Only matrices already within ``tol_det`` of determinant one are accepted;
    the correction removes the residual phase so downstream planning sees an
    exact member of SU(n).
    """
    x = check_special_unitary(x, "goal", tol_unitary=tol_unitary, tol_det=tol_det)
    n = x.shape[0]
    d = np.linalg.det(x)
    return x * np.exp(-1j * np.angle(d) / n)


# ---------------------------------------------------------------------------
# generators

def _check_pair(i: int, j: int, n: int) -> None:
    if not (1 <= i < j <= n):
        raise ValueError(f"generator indices need 1 <= i < j <= n, got i={i}, j={j}, n={n}")


def generator_HR(i: int, j: int, n: int) -> np.ndarray:
    """Real antisymmetric generator: +1 at (i, j), -1 at (j, i); 1-based."""
    _check_pair(i, j, n)
    h = np.zeros((n, n), dtype=complex)
    h[i - 1, j - 1] = 1.0
    h[j - 1, i - 1] = -1.0
    return h


def generator_HI(i: int, j: int, n: int) -> np.ndarray:
    """Imaginary symmetric generator: i at (i, j) and (j, i); 1-based."""
    _check_pair(i, j, n)
    h = np.zeros((n, n), dtype=complex)
    h[i - 1, j - 1] = 1j
    h[j - 1, i - 1] = 1j
    return h


def canonical_diagonals(n: int) -> list[np.ndarray]:
    """D_1..D_n: ``diag(i, -i)`` on consecutive slots, closing with slots (1, n)."""
    if n < 2:
        raise ValueError("n >= 2 required")
    out = []
    for ell in range(n - 1):
        d = np.zeros(n, dtype=complex)
        d[ell], d[ell + 1] = 1j, -1j
        out.append(np.diag(d))
    d = np.zeros(n, dtype=complex)
    d[0], d[n - 1] = 1j, -1j
    out.append(np.diag(d))
    return out


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# ---------------------------------------------------------------------------
# exponentials

def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square complex matrix (Pade via scipy)."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("expm: non-finite input")
    return scipy.linalg.expm(a)


def expm_skew(a: np.ndarray) -> np.ndarray:
    """Exponential of a skew-Hermitian matrix through a Hermitian eigensolve.

    The result is unitary to working precision regardless of ``|a|``, which
    keeps long fixed-step integrations on the group.
    """
    # eigh reads only the lower triangle, so no explicit symmetrisation
    w, v = np.linalg.eigh(1j * a)
    return (v * np.exp(-1j * w)) @ v.conj().T


def polar_unitary(x: np.ndarray) -> np.ndarray:
    """Closest unitary to ``x`` in Frobenius norm."""
    u, _, vh = np.linalg.svd(x)
    return u @ vh


def project_su(x: np.ndarray) -> np.ndarray:
    u = polar_unitary(x)
    n = u.shape[0]
    return u * np.exp(-1j * np.angle(np.linalg.det(u)) / n)


# ---------------------------------------------------------------------------
# eigen-phases

@dataclass(frozen=True)
class EigenPhases:
    """``W = M^H diag(exp(i*phases)) M`` with ``sum(phases) == 0``.

    ``basis`` holds ``M``; note the conjugate-transpose convention.
    """

    phases: np.ndarray
    basis: np.ndarray

    def reconstruct(self, scale: float = 1.0) -> np.ndarray:
        m = self.basis
        return dag(m) @ np.diag(np.exp(1j * self.phases * scale)) @ m


def zero_sum_phases(raw: np.ndarray) -> np.ndarray:
    """Shift raw phases in (-pi, pi] by multiples of 2*pi so they sum to zero.

    With ``det = 1`` the raw sum is ``2*pi*q``.  For ``q > 0`` the ``q``
    largest phases lose ``2*pi``; for ``q < 0`` the ``|q|`` smallest gain it.
    Ties are broken by position (stable sort), so the result is deterministic.
    """
    lam = np.array(raw, dtype=float)
    q = int(round(lam.sum() / (2 * np.pi)))
    order = np.argsort(lam, kind="stable")
    if q > 0:
        lam[order[::-1][:q]] -= 2 * np.pi
    elif q < 0:
        lam[order[:-q]] += 2 * np.pi
    # exact zero-sum: absorb residual rounding in the largest-magnitude entry
    lam[np.argmax(np.abs(lam))] -= lam.sum()
    return lam


def unitary_eigendecomposition(w: np.ndarray, tol: float = TAU_EIG) -> EigenPhases:
    """Diagonalise a special unitary matrix with zero-sum eigen-phases.

    The complex Schur form of a normal matrix is diagonal, and the Schur
    vectors are orthonormal even inside degenerate eigenspaces.
    """
    w = check_special_unitary(w, "W")
    t, q = scipy.linalg.schur(w, output="complex")
    off = frob(np.triu(t, 1))
    if not np.all(np.isfinite(t)) or off > 1e3 * tol:
        raise EigenDecompositionError(f"Schur form not diagonal (off-diagonal mass {off:.3e})")
    raw = np.angle(np.diag(t))
    raw[raw <= -np.pi + 1e-12] += 2 * np.pi  # keep -1 on the +pi branch
    phases = zero_sum_phases(raw)
    ep = EigenPhases(phases=phases, basis=dag(q))
    err = frob(ep.reconstruct() - w)
    if err > tol:
        raise EigenDecompositionError(f"reconstruction error {err:.3e} exceeds {tol:.1e}")
    return ep


# ---------------------------------------------------------------------------
# rank and Lie closure

def realify(mats: Iterable[np.ndarray]) -> np.ndarray:
    """Stack matrices as rows of real ``2 n^2`` coordinate vectors."""
    rows = [np.concatenate([np.asarray(m).real.ravel(), np.asarray(m).imag.ravel()]) for m in mats]
    return np.array(rows, dtype=float)


def singular_values(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Singular values of the row-normalised real flattening.

    Zero rows are dropped; every other row is scaled to unit length so that
    the result does not depend on the magnitude of individual inputs.
    """
    if len(vectors) == 0:
        raise ValueError("numerical_rank: empty list")
    rows = realify(vectors)
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 0
    if not np.any(keep):
        return np.zeros(0)
    rows = rows[keep] / norms[keep, None]
    return np.linalg.svd(rows, compute_uv=False)


def numerical_rank(vectors: Sequence[np.ndarray], tol: float = RANK_TOL) -> int:
    s = singular_values(vectors)
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def lie_closure_dim(gens: Sequence[np.ndarray], n: int | None = None, tol: float = RANK_TOL) -> int:
    """Dimension of the real Lie algebra generated by ``gens``.

    Keeps an orthonormal real basis of the span and brackets every newly
    admitted element against the whole basis until nothing new appears.
    """
    if len(gens) == 0:
        raise ValueError("lie_closure_dim: empty generator list")
    if n is None:
        n = np.asarray(gens[0]).shape[0]
    max_dim = 2 * n * n
    basis_vecs: list[np.ndarray] = []
    basis_mats: list[np.ndarray] = []

    def admit(m: np.ndarray) -> bool:
        v = realify([m])[0]
        scale = np.linalg.norm(v)
        if scale == 0:
            return False
        v = v / scale
        for b in basis_vecs:
            v = v - (b @ v) * b
        for b in basis_vecs:  # second Gram-Schmidt pass
            v = v - (b @ v) * b
        r = np.linalg.norm(v)
        if r <= tol:
            return False
        v = v / r
        basis_vecs.append(v)
        basis_mats.append((v[: n * n] + 1j * v[n * n:]).reshape(n, n))
        return True

    for g in gens:
        admit(np.asarray(g, dtype=complex))
    pending = list(basis_mats)
    while pending and len(basis_vecs) < max_dim:
        new = []
        for a in pending:
            for b in list(basis_mats):
                c = commutator(a, b)
                if admit(c):
                    new.append(basis_mats[-1])
        pending = new
    return len(basis_vecs)


# ---------------------------------------------------------------------------
# serialisation

def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"n": int(m.shape[0]), "re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(obj: dict) -> np.ndarray:
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    m = re + 1j * im
    n = int(obj.get("n", m.shape[0]))
    if m.shape != (n, n):
        raise ValueError(f"matrix JSON shape {m.shape} does not match n={n}")
    return m


def dump_matrix(m: np.ndarray) -> str:
    return json.dumps(matrix_to_json(m))


def random_su(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random element of SU(n) (QR of a Ginibre matrix, phase fixed)."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return q * np.exp(-1j * np.angle(np.linalg.det(q)) / n)
