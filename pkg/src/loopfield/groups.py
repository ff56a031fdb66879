"""Compact matrix group backends: U(N), SU(N), SO(N).

Provides Haar sampling, orthonormal Lie-algebra frames, directional
derivatives and Casimir data.  The Lie-algebra inner product is
<X, Y> = (beta_g * N / 2) * Tr(X^* Y), which for the unitary families
(beta_g = 2) reduces to N * Tr(X Y^*).  All frames built here are
orthonormal with respect to that inner product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

GROUP_TOL = 1e-12


class GroupError(ValueError):
    pass


@dataclass(frozen=True)
class GroupSpec:
    """One of the supported compact groups, identified by family and size."""

    family: str  # "U" | "SU" | "SO"
    n: int

    def __post_init__(self):
        if self.family not in ("U", "SU", "SO"):
            raise GroupError(f"unknown family {self.family!r}")
        if self.n < 1:
            raise GroupError("matrix size must be positive")
        if self.family == "SU" and self.n < 2:
            raise GroupError("SU(1) is trivial; use U(1)")
        if self.family == "SO" and self.n < 2:
            raise GroupError("SO(N) needs N >= 2")

    @property
    def beta_g(self) -> int:
        return 1 if self.family == "SO" else 2

    @property
    def gamma_g(self) -> int:
        return 1 if self.family == "SU" else 0

    @property
    def is_real(self) -> bool:
        return self.family == "SO"

    @property
    def dim_lie(self) -> int:
        n = self.n
        if self.family == "U":
            return n * n
        if self.family == "SU":
            return n * n - 1
        return n * (n - 1) // 2

    @property
    def dtype(self):
        return np.float64 if self.is_real else np.complex128

    def __str__(self):
        return f"{self.family}({self.n})"


def parse_group(text: str) -> GroupSpec:
    text = text.strip()
    fam = text.rstrip("0123456789)").rstrip("(").strip()
    num = text[len(fam):].strip("()")
    return GroupSpec(fam, int(num))


def identity(spec: GroupSpec) -> np.ndarray:
    return np.eye(spec.n, dtype=spec.dtype)


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise GroupError(f"shape mismatch {a.shape} vs {b.shape}")
    return a @ b


def inverse(a: np.ndarray) -> np.ndarray:
    return np.conj(a).swapaxes(-1, -2)


def trace_normalized(a: np.ndarray):
    n = a.shape[-1]
    return np.trace(a, axis1=-2, axis2=-1) / n


def adjoint_deviation(q: np.ndarray) -> float:
    """Max-norm of Q Q^* - I (and |det Q - 1| for SU/SO is checked separately)."""
    n = q.shape[-1]
    return float(np.max(np.abs(q @ inverse(q) - np.eye(n))))


def is_in_group(q: np.ndarray, spec: GroupSpec, tol: float = GROUP_TOL) -> bool:
    if adjoint_deviation(q) > tol:
        return False
    if spec.family in ("SU", "SO"):
        if abs(np.linalg.det(q) - 1.0) > tol:
            return False
    if spec.is_real and np.iscomplexobj(q) and np.max(np.abs(q.imag)) > tol:
        return False
    return True


def project_to_group(q: np.ndarray, spec: GroupSpec) -> np.ndarray:
    """Polar projection back onto the group; used to control drift in long chains."""
    u, _, vh = np.linalg.svd(q)
    out = u @ vh
    if spec.family in ("SU", "SO"):
        det = np.linalg.det(out)
        if spec.is_real:
            if det < 0:  # flip one column to land in SO(N)
                out = out.copy()
                out[..., :, 0] *= -1.0
        else:
            out = out * det ** (-1.0 / spec.n)
    return out


def inner_product(spec: GroupSpec, x: np.ndarray, y: np.ndarray) -> float:
    val = (spec.beta_g * spec.n / 2.0) * np.trace(np.conj(x).T @ y)
    return float(val.real)


def lie_basis(spec: GroupSpec) -> np.ndarray:
    """Orthonormal basis of the Lie algebra, shape (dim_lie, N, N).

    Generalized Gell-Mann construction, each element scaled to unit norm
    under the group's inner product.
    """
    n = spec.n
    mats = []
    if spec.family in ("U", "SU"):
        for k in range(n):
            for l in range(k + 1, n):
                s = np.zeros((n, n), dtype=complex)
                s[k, l] = 1.0
                s[l, k] = 1.0
                mats.append(1j * s)
                a = np.zeros((n, n), dtype=complex)
                a[k, l] = 1.0
                a[l, k] = -1.0
                mats.append(a)
        if spec.family == "U":
            for k in range(n):
                d = np.zeros((n, n), dtype=complex)
                d[k, k] = 1j
                mats.append(d)
        else:
            for m in range(1, n):
                v = np.zeros(n)
                v[:m] = 1.0
                v[m] = -m
                mats.append(1j * np.diag(v).astype(complex))
    else:
        for k in range(n):
            for l in range(k + 1, n):
                a = np.zeros((n, n))
                a[k, l] = 1.0
                a[l, k] = -1.0
                mats.append(a)
    out = []
    for m in mats:
        norm = np.sqrt(inner_product(spec, m, m))
        out.append(m / norm)
    basis = np.array(out)
    assert basis.shape[0] == spec.dim_lie
    return basis


def lie_vector_matrix(spec: GroupSpec, coords: np.ndarray) -> np.ndarray:
    """Reconstruct A = sum_j coords_j L_j."""
    basis = lie_basis(spec)
    return np.tensordot(np.asarray(coords, dtype=float), basis, axes=(0, 0))


def exp_map(spec: GroupSpec, a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a Lie-algebra element (matrix form)."""
    a = np.asarray(a)
    n = spec.n
    if n == 1:
        return np.exp(a)
    if spec.family == "SU" and n == 2:
        # a = i (v . sigma), closed form
        theta = np.sqrt(max(0.0, 0.5 * float(np.trace(a @ np.conj(a).T).real)))
        if theta < 1e-30:
            return np.eye(2, dtype=complex) + a
        return np.cos(theta) * np.eye(2, dtype=complex) + (np.sin(theta) / theta) * a
    if spec.family == "SO" and n == 3:
        # Rodrigues formula
        theta = np.sqrt(0.5 * float(np.sum(a * a)))
        if theta < 1e-30:
            return np.eye(3) + a
        return (
            np.eye(3)
            + (np.sin(theta) / theta) * a
            + ((1.0 - np.cos(theta)) / theta**2) * (a @ a)
        )
    return scipy.linalg.expm(a)


def exp_coords(spec: GroupSpec, coords: np.ndarray) -> np.ndarray:
    return exp_map(spec, lie_vector_matrix(spec, coords))


def haar_sample(spec: GroupSpec, rng: np.random.Generator) -> np.ndarray:
    """One Haar-distributed group element."""
    n = spec.n
    if spec.family == "SO":
        z = rng.standard_normal((n, n))
        q, r = np.linalg.qr(z)
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q = q.copy()
            q[:, 0] *= -1.0
        return q
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    if spec.family == "SU":
        q = q * np.linalg.det(q) ** (-1.0 / n)
    return q


def gaussian_lie_sample(spec: GroupSpec, rng: np.random.Generator, sigma: float = 1.0) -> np.ndarray:
    """Coordinates of a Gaussian Lie-algebra vector, i.i.d. normal(0, sigma^2)."""
    if sigma <= 0:
        raise GroupError("sigma must be positive")
    return sigma * rng.standard_normal(spec.dim_lie)


def directional_derivative(f, x_mat: np.ndarray, a: np.ndarray, h: float = 1e-5,
                           richardson: bool = False):
    """Central-difference d/dt f(exp(t X) a) at t = 0, O(h^2) error.

    With richardson=True combines steps h and h/2 for O(h^4).
    """
    spec_free_exp = scipy.linalg.expm

    def central(step):
        ep = spec_free_exp(step * x_mat)
        em = spec_free_exp(-step * x_mat)
        return (f(ep @ a) - f(em @ a)) / (2.0 * step)

    d1 = central(h)
    if not richardson:
        return d1
    d2 = central(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


def casimir_standard(spec: GroupSpec) -> float:
    """Casimir constant of the standard representation: sum_j L_j^2 = c I."""
    basis = lie_basis(spec)
    total = np.zeros((spec.n, spec.n), dtype=complex)
    for lj in basis:
        total += lj @ lj
    c = np.trace(total) / spec.n
    off = np.max(np.abs(total - c * np.eye(spec.n)))
    if off > 1e-10:
        raise GroupError(f"Casimir sum not scalar (off-diagonal {off:.2e})")
    return float(c.real)


def casimir_standard_expected(spec: GroupSpec) -> float:
    """Closed-form Casimir of the standard representation for cross-checking."""
    if spec.family == "U":
        return -1.0
    if spec.family == "SU":
        return -1.0 + 1.0 / spec.n**2
    return -1.0 + 1.0 / spec.n
