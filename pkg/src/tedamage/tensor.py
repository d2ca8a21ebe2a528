"""
Small symmetric tensors and the isotropic elasticity operators.

Two layers live here:

* value-type operations on :class:`SymTensor2` (``apply_A``, ``dev``, ...),
  used by the oracles and the property suite;
* vectorized counterparts acting on stacks of full ``(..., d, d)`` arrays,
  used on the assembly hot path.

Both layers implement

    A(s)      = lam tr(s) I + 2 mu s
    A^{1/2}(s) = sqrt(2 mu) s + (sqrt(2 mu + d lam) - sqrt(2 mu)) / d tr(s) I
    B(s)      = A(s) : s
    dev(s)    = s - tr(s) / d I
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .errors import InvalidArgument

# Voigt-like storage order: diagonal first, then off-diagonals.
_INDEX_MAP = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}


@dataclass(frozen=True)
class SymTensor2:
    """Symmetric d x d tensor stored as its d(d+1)/2 independent entries."""

    dim: int
    entries: tuple

    def __post_init__(self):
        if self.dim not in _INDEX_MAP:
            raise InvalidArgument(f"dim must be 2 or 3, got {self.dim}")
        entries = tuple(float(e) for e in self.entries)
        if len(entries) != self.dim * (self.dim + 1) // 2:
            raise InvalidArgument(
                f"expected {self.dim * (self.dim + 1) // 2} entries for dim={self.dim}"
            )
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_matrix(cls, m) -> "SymTensor2":
        m = np.asarray(m, dtype=float)
        d = m.shape[0]
        if m.shape != (d, d) or d not in _INDEX_MAP:
            raise InvalidArgument(f"expected a 2x2 or 3x3 matrix, got shape {m.shape}")
        # symmetrize so that storage is exact for nearly symmetric inputs
        return cls(d, tuple(0.5 * (m[i, j] + m[j, i]) for i, j in _INDEX_MAP[d]))

    @classmethod
    def identity(cls, dim: int) -> "SymTensor2":
        return cls(dim, tuple(1.0 if i == j else 0.0 for i, j in _INDEX_MAP[dim]))

    @classmethod
    def zeros(cls, dim: int) -> "SymTensor2":
        return cls(dim, (0.0,) * (dim * (dim + 1) // 2))

    def to_matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for (i, j), v in zip(_INDEX_MAP[self.dim], self.entries):
            m[i, j] = v
            m[j, i] = v
        return m

    @property
    def trace(self) -> float:
        return sum(self.entries[: self.dim])

    def inner(self, other: "SymTensor2") -> float:
        """Frobenius product s : t."""
        _check_same_dim(self, other)
        d = self.dim
        diag = sum(a * b for a, b in zip(self.entries[:d], other.entries[:d]))
        off = sum(a * b for a, b in zip(self.entries[d:], other.entries[d:]))
        return diag + 2.0 * off

    def norm(self) -> float:
        return sqrt(self.inner(self))

    def __add__(self, other: "SymTensor2") -> "SymTensor2":
        _check_same_dim(self, other)
        return SymTensor2(self.dim, tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __sub__(self, other: "SymTensor2") -> "SymTensor2":
        _check_same_dim(self, other)
        return SymTensor2(self.dim, tuple(a - b for a, b in zip(self.entries, other.entries)))

    def __mul__(self, alpha: float) -> "SymTensor2":
        return SymTensor2(self.dim, tuple(alpha * a for a in self.entries))

    __rmul__ = __mul__


def _check_same_dim(a: SymTensor2, b: SymTensor2) -> None:
    if a.dim != b.dim:
        raise InvalidArgument(f"dimension mismatch: {a.dim} vs {b.dim}")


@dataclass(frozen=True)
class ElasticModuli:
    """Lame parameters of an isotropic material in ``dim`` space dimensions."""

    lam: float
    mu: float
    dim: int = 2

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise InvalidArgument(f"Lame parameters must be positive, got lam={self.lam}, mu={self.mu}")
        if self.dim not in (2, 3):
            raise InvalidArgument(f"dim must be 2 or 3, got {self.dim}")

    @property
    def lipschitz_constant(self) -> float:
        """Bound ``2 lam d + 2 mu`` on ||A(t) - A(s)|| / ||t - s||."""
        return 2.0 * self.lam * self.dim + 2.0 * self.mu

    @property
    def ellipticity_constant(self) -> float:
        """Provable coercivity constant: A(t):t >= 2 mu t:t."""
        return 2.0 * self.mu

    @property
    def ellipticity_constant_literature(self) -> float:
        """Alternative constant 1/(2 mu), selectable in the a priori functionals.

        It is a valid coercivity bound only when 1/(2 mu) <= 2 mu; the default
        everywhere is :attr:`ellipticity_constant`.
        """
        return 1.0 / (2.0 * self.mu)


def _check_moduli_dim(m: ElasticModuli, s: SymTensor2) -> None:
    if m.dim != s.dim:
        raise InvalidArgument(f"dimension mismatch: moduli dim={m.dim}, tensor dim={s.dim}")


def apply_A(m: ElasticModuli, s: SymTensor2) -> SymTensor2:
    _check_moduli_dim(m, s)
    return 2.0 * m.mu * s + (m.lam * s.trace) * SymTensor2.identity(s.dim)


def apply_A_sqrt(m: ElasticModuli, s: SymTensor2) -> SymTensor2:
    """Square root of A: applying it twice reproduces :func:`apply_A`."""
    _check_moduli_dim(m, s)
    d = s.dim
    r = sqrt(2.0 * m.mu)
    c = (sqrt(2.0 * m.mu + d * m.lam) - r) / d
    return r * s + (c * s.trace) * SymTensor2.identity(d)


def dev(s: SymTensor2) -> SymTensor2:
    return s - (s.trace / s.dim) * SymTensor2.identity(s.dim)


def energy_density_B(m: ElasticModuli, s: SymTensor2) -> float:
    """B(s) = A(s):s = lam tr(s)^2 + 2 mu s:s."""
    _check_moduli_dim(m, s)
    return m.lam * s.trace**2 + 2.0 * m.mu * s.inner(s)


def positive_part(a: float) -> float:
    return a if a > 0 else 0.0


def positive_part_derivative(a):
    """Subgradient of the positive part, taking 0 at the kink."""
    return np.where(np.asarray(a) > 0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# Vectorized versions on (..., d, d) arrays
# ---------------------------------------------------------------------------


def trace(mats: np.ndarray) -> np.ndarray:
    return np.trace(mats, axis1=-2, axis2=-1)


def A_array(m: ElasticModuli, mats: np.ndarray) -> np.ndarray:
    d = mats.shape[-1]
    eye = np.eye(d)
    return m.lam * trace(mats)[..., None, None] * eye + 2.0 * m.mu * mats


def B_array(m: ElasticModuli, mats: np.ndarray) -> np.ndarray:
    """Pointwise energy density lam tr(E)^2 + 2 mu E:E."""
    return m.lam * trace(mats) ** 2 + 2.0 * m.mu * np.einsum("...ij,...ij->...", mats, mats)


def sym_grad(grads: np.ndarray) -> np.ndarray:
    """Strain from displacement gradients ``grads[..., i, j] = d u_i / d x_j``."""
    return 0.5 * (grads + np.swapaxes(grads, -1, -2))
