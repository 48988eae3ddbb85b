"""Lattice domains, the discrete Laplacian and random-walk transition kernels.

Site ``i`` sits at ``x = i * epsilon`` and stands for the cell
``[x, x + epsilon)``.  The walk underlying every kernel jumps to each nearest
neighbour at rate ``1 / (2 epsilon^2)``, so its generator is the discrete
Laplacian ``(U[i-1] + U[i+1] - 2 U[i]) / (2 epsilon^2)``.

Boundary rules:

* ``PERIODIC``: wrap around.
* ``NEUMANN``: reflecting; the ghost neighbour outside the end cell is the end
  cell itself (the mirror image of a cell-centred lattice), so a jump off the
  end is a null move.
* ``DIRICHLET`` and ``FREE_TRUNCATED``: the two end sites are pinned to zero;
  the walk is killed on reaching them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import expm_multiply
from scipy.special import ive

from .errors import ContractError, NumericError, ResourceError

__all__ = [
    "Boundary",
    "LatticeDomain",
    "KernelMatrix",
    "discrete_laplacian_apply",
    "generator_matrix",
    "walk_kernel",
    "walk_kernel_row",
    "kernel_matrix",
    "apply_semigroup",
    "kernel_l2_bound_check",
    "DENSE_CAP",
]

DENSE_CAP = 4096
# Miller recurrence is used up to this tau; beyond it the Amos routines
# behind scipy.special.ive (uniform asymptotic expansions) take over.
MILLER_TAU_MAX = 1e6
TAU_MAX = 1e15


class Boundary(enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    PERIODIC = "periodic"
    FREE_TRUNCATED = "free"

    @classmethod
    def parse(cls, value) -> "Boundary":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"freetruncated": "free", "free_truncated": "free", "line": "free"}
        key = aliases.get(key, key)
        for b in cls:
            if b.value == key:
                return b
        raise ContractError(f"unknown boundary {value!r}")

    @property
    def absorbing(self) -> bool:
        return self in (Boundary.DIRICHLET, Boundary.FREE_TRUNCATED)


def _unit_count(epsilon: float) -> int:
    L = round(1.0 / epsilon)
    if L < 2 or abs(L * epsilon - 1.0) > 1e-9:
        raise ContractError(f"1/epsilon must be an integer >= 2, got epsilon={epsilon!r}")
    return L


@dataclass(frozen=True)
class LatticeDomain:
    """Sites ``origin_index .. end_index`` (inclusive) at spacing ``epsilon``."""

    epsilon: float
    origin_index: int
    end_index: int
    boundary: Boundary

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary.parse(self.boundary))
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ContractError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.end_index - self.origin_index < 2:
            raise ContractError("a domain needs at least three sites")

    @classmethod
    def unit_interval(cls, epsilon: float, boundary="dirichlet") -> "LatticeDomain":
        """[0, 1]: sites 0..L for absorbing rules, 0..L-1 (cells tiling [0,1)) otherwise."""
        boundary = Boundary.parse(boundary)
        L = _unit_count(epsilon)
        end = L if boundary.absorbing else L - 1
        return cls(epsilon, 0, end, boundary)

    @classmethod
    def truncated_line(cls, epsilon: float, half_width: float) -> "LatticeDomain":
        """[-R, 1 + R] with absorbing ends, sharing sites 0..L with the unit interval."""
        L = _unit_count(epsilon)
        m = int(math.ceil(half_width / epsilon - 1e-9))
        return cls(epsilon, -m, L + m, Boundary.FREE_TRUNCATED)

    @property
    def n_sites(self) -> int:
        return self.end_index - self.origin_index + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.origin_index, self.end_index + 1)

    @property
    def positions(self) -> np.ndarray:
        return self.indices * self.epsilon

    def local(self, global_index) -> np.ndarray:
        return np.asarray(global_index) - self.origin_index

    def refined(self, factor: int) -> "LatticeDomain":
        """Same physical extent at spacing epsilon / factor."""
        eps = self.epsilon / factor
        if self.boundary.absorbing:
            return LatticeDomain(eps, self.origin_index * factor, self.end_index * factor, self.boundary)
        return LatticeDomain(eps, self.origin_index * factor, (self.end_index + 1) * factor - 1, self.boundary)

    def check_field(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.n_sites:
            raise ContractError(f"field has {values.shape[-1]} sites, domain has {self.n_sites}")
        return values


def discrete_laplacian_apply(domain: LatticeDomain, field) -> np.ndarray:
    """``(U[i-1] + U[i+1] - 2 U[i]) / (2 eps^2)`` along the last axis.

    Periodic wraps, Neumann uses the end cell as its own ghost, and absorbing
    rules use ghost value 0 (their end sites are pinned by the stepper).
    """
    u = domain.check_field(field)
    c = 0.5 / domain.epsilon**2
    if domain.boundary is Boundary.PERIODIC:
        left = np.roll(u, 1, axis=-1)
        right = np.roll(u, -1, axis=-1)
    else:
        left = np.empty_like(u)
        right = np.empty_like(u)
        left[..., 1:] = u[..., :-1]
        right[..., :-1] = u[..., 1:]
        if domain.boundary is Boundary.NEUMANN:
            left[..., 0] = u[..., 0]
            right[..., -1] = u[..., -1]
        else:
            left[..., 0] = 0.0
            right[..., -1] = 0.0
    return c * ((left - u) + (right - u))


def generator_matrix(domain: LatticeDomain, dense: bool = True):
    """Generator Q of the walk with the domain's boundary rule.

    For absorbing rules only the interior block is meaningful; the rows and
    columns of the two end sites are zero.
    """
    n = domain.n_sites
    r = 0.5 / domain.epsilon**2
    main = np.full(n, -2.0 * r)
    off = np.full(n - 1, r)
    if domain.boundary is Boundary.NEUMANN:
        main[0] = main[-1] = -r
    if domain.boundary.absorbing:
        main[0] = main[-1] = 0.0
        off[0] = off[-1] = 0.0
    Q = sparse.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    if domain.boundary is Boundary.PERIODIC:
        Q[0, n - 1] += r
        Q[n - 1, 0] += r
    Q = Q.tocsr()
    return Q.toarray() if dense else Q


# --------------------------------------------------------------------------
# free walk kernel


def _miller_row(tau: float, jmax: int) -> np.ndarray:
    """e^{-tau} I_k(tau) for k = 0..jmax by Miller's backward recurrence.

    The recurrence I_{k-1} = (2k / tau) I_k + I_{k+1} is run downward from an
    index where I_k is negligible, rescaling to avoid overflow, and normalised
    with I_0 + 2 sum_{k>=1} I_k = e^tau, which makes the row sum exactly one.
    """
    start = jmax + int(math.ceil(12.0 * math.sqrt(tau))) + 40
    vals = np.zeros(start + 2)
    vals[start] = 1e-280
    two_over_tau = 2.0 / tau
    for k in range(start, 0, -1):
        vals[k - 1] = k * two_over_tau * vals[k] + vals[k + 1]
        if vals[k - 1] > 1e250:
            vals[k - 1:] *= 1e-250
    norm = vals[0] + 2.0 * math.fsum(vals[1:start + 1])
    return vals[: jmax + 1] / norm


def walk_kernel_row(t: float, epsilon: float, jmax: int) -> np.ndarray:
    """``P_t(j eps)`` for ``j = 0..jmax``; see :func:`walk_kernel`."""
    if t < 0 or epsilon <= 0:
        raise ContractError("need t >= 0 and epsilon > 0")
    jmax = int(jmax)
    tau = t / epsilon**2
    if not math.isfinite(tau) or tau > TAU_MAX:
        raise NumericError(f"tau = t/eps^2 = {tau!r} is out of range")
    if tau == 0.0:
        row = np.zeros(jmax + 1)
        row[0] = 1.0
        return row
    if tau <= MILLER_TAU_MAX:
        return _miller_row(tau, jmax)
    return ive(np.arange(jmax + 1), tau)


def walk_kernel(t: float, epsilon: float, j: int) -> float:
    """Transition probability ``e^{-tau} I_|j|(tau)``, ``tau = t / eps^2``, of the free walk."""
    j = abs(int(j))
    return float(walk_kernel_row(t, epsilon, j)[j])


# --------------------------------------------------------------------------
# kernel matrices


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense semigroup ``exp(t Q)``; entries are read-only."""

    time: float
    domain: LatticeDomain
    entries: np.ndarray

    def apply(self, values) -> np.ndarray:
        """Mix a field (or a batch of fields along axis 0): ``V[i] <- sum_j K[i, j] V[j]``."""
        values = self.domain.check_field(values)
        return values @ self.entries.T

    def __matmul__(self, other: "KernelMatrix") -> np.ndarray:
        return self.entries @ other.entries


def _periodic_fft(t: float, domain: LatticeDomain) -> np.ndarray:
    n = domain.n_sites
    lam = (np.cos(2.0 * np.pi * np.arange(n) / n) - 1.0) / domain.epsilon**2
    c = np.fft.ifft(np.exp(t * lam)).real
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return c[idx]


def kernel_matrix(t: float, domain: LatticeDomain, method: str = "expm", cap: int = DENSE_CAP) -> KernelMatrix:
    """``exp(t Q)`` for the domain's generator.

    ``method="expm"`` uses Pade scaling-and-squaring (scipy); ``method="fft"``
    diagonalises the circulant Periodic generator in the Fourier basis.  For
    absorbing rules the end-site rows and columns are zero when ``t > 0``.
    """
    if t < 0:
        raise ContractError("kernel time must be >= 0")
    n = domain.n_sites
    if n > cap:
        raise ResourceError(f"{n} sites exceeds the dense kernel cap {cap}")
    if t == 0:
        K = np.eye(n)
    elif method == "fft":
        if domain.boundary is not Boundary.PERIODIC:
            raise ContractError("fft kernels are only available for periodic domains")
        K = _periodic_fft(t, domain)
    elif method == "expm":
        Q = generator_matrix(domain)
        if domain.boundary.absorbing:
            K = np.zeros((n, n))
            K[1:-1, 1:-1] = linalg.expm(t * Q[1:-1, 1:-1])
        else:
            K = linalg.expm(t * Q)
        K = 0.5 * (K + K.T)
        np.maximum(K, 0.0, out=K)
    else:
        raise ContractError(f"unknown kernel method {method!r}")
    K.setflags(write=False)
    return KernelMatrix(float(t), domain, K)


def apply_semigroup(t: float, domain: LatticeDomain, values) -> np.ndarray:
    """``exp(t Q)`` applied to a field or a batch, for domains of any size.

    Small domains use the dense kernel; larger ones use the FFT for Periodic
    and the sparse truncated-Taylor action ``expm_multiply`` otherwise.
    """
    values = domain.check_field(values)
    if domain.n_sites <= DENSE_CAP:
        return kernel_matrix(t, domain).apply(values)
    if domain.boundary is Boundary.PERIODIC:
        n = domain.n_sites
        lam = (np.cos(2.0 * np.pi * np.arange(n) / n) - 1.0) / domain.epsilon**2
        return np.fft.ifft(np.fft.fft(values, axis=-1) * np.exp(t * lam), axis=-1).real
    Q = generator_matrix(domain, dense=False)
    out = expm_multiply(t * Q, np.atleast_2d(values).T).T
    if domain.boundary.absorbing:
        out[..., 0] = 0.0
        out[..., -1] = 0.0
    return out.reshape(values.shape)


def kernel_l2_bound_check(epsilon: float, s_values) -> list[tuple[float, float, float]]:
    """For each s: (s, sum_j [P_s(j eps) / eps]^2 * eps, that mass times sqrt(s)).

    The last column is the ratio to 1/sqrt(s); it stays O(1) uniformly in eps
    (about 1/(2 sqrt(pi)) in the Gaussian regime s >> eps^2).
    """
    out = []
    for s in s_values:
        if s <= 0:
            raise ContractError("s values must be positive")
        tau = s / epsilon**2
        jmax = int(math.ceil(12.0 * math.sqrt(tau))) + 40
        p = walk_kernel_row(s, epsilon, jmax)
        mass = (p[0] ** 2 + 2.0 * math.fsum(p[1:] ** 2)) / epsilon
        out.append((float(s), mass, mass * math.sqrt(s)))
    return out
