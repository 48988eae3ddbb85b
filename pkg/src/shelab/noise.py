"""Counter-based Gaussian increments keyed by (seed, replica, site, step).

Keying layout (bit-exact, so golden outputs are portable)
-----------------------------------------------------------
Each draw is one evaluation of Philox4x32-10 (Salmon et al. 2011) with

* key    ``k0 = seed & 0xFFFFFFFF``, ``k1 = (seed >> 32) & 0xFFFFFFFF``
  (``seed`` is an unsigned 64-bit integer);
* counter ``c0 = step & 0xFFFFFFFF``, ``c1 = step >> 32`` (``step >= 0``),
  ``c2 = site mod 2**32`` (the global site index as a signed 32-bit integer,
  two's complement), ``c3 = replica`` (``0 <= replica < 2**32``).

From the output words ``x0, x1`` a uniform in (0, 1) is formed as
``((x0 >> 5) * 2**26 + (x1 >> 6) + 0.5) * 2**-53`` and mapped to a standard
normal by the inverse CDF (``scipy.special.ndtri``).  The Brownian increment
at base resolution is ``sqrt(base_dt) * z``.

Aggregation
-----------
A provider at spacing ``2**k * base_epsilon`` and step ``m * base_dt``
returns, for coarse site ``I`` and coarse step ``s``::

    2**(-k/2) * sum_{f < m} sum_{q < 2**k} dB(site = I * 2**k + q, step = s * m + f)

summed in exactly that loop order, so every coarse value is a pure function
of its key.  Only the Brownian increment ``dB`` is delivered; the integrator
applies ``sigma(U) * eps**-0.5``.
"""

from __future__ import annotations

import ctypes
import math
from dataclasses import dataclass, replace

import numba
import numpy as np
from numba.extending import get_cython_function_address
from scipy.special import ndtri

from .errors import ContractError

__all__ = [
    "NoiseSource",
    "IncrementProvider",
    "site_increment",
    "coupled_view",
    "refine",
    "provider_for",
    "philox4x32",
    "reference_block",
]

M0 = 0xD2511F53
M1 = 0xCD9E8D57
W0 = 0x9E3779B9
W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF

_ndtri_c = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)(
    get_cython_function_address("scipy.special.cython_special", "ndtri")
)


# --------------------------------------------------------------------------
# numpy reference implementation (slow; used to cross-check the kernel)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds: int = 10):
    """Vectorised Philox4x32 on uint64 arrays holding 32-bit words."""
    m0, m1, mask, s32 = np.uint64(M0), np.uint64(M1), np.uint64(MASK32), np.uint64(32)
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    for r in range(rounds):
        ka = np.uint64((k0 + r * W0) & MASK32)
        kb = np.uint64((k1 + r * W1) & MASK32)
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (p1 >> s32) ^ c1 ^ ka, p1 & mask, (p0 >> s32) ^ c3 ^ kb, p0 & mask
    return c0, c1, c2, c3


def _key(seed: int) -> tuple[int, int]:
    return seed & MASK32, (seed >> 32) & MASK32


def reference_block(seed: int, steps, sites, replicas) -> np.ndarray:
    """Standard normals for the grid steps x replicas x sites (numpy path)."""
    steps = np.asarray(steps, dtype=np.int64)[:, None, None]
    reps = np.asarray(replicas, dtype=np.int64)[None, :, None]
    sites = np.asarray(sites, dtype=np.int64)[None, None, :]
    k0, k1 = _key(seed)
    shape = np.broadcast_shapes(steps.shape, reps.shape, sites.shape)
    st = steps.astype(np.uint64)
    x0, x1, _, _ = philox4x32(
        np.broadcast_to(st & np.uint64(MASK32), shape),
        np.broadcast_to(st >> np.uint64(32), shape),
        np.broadcast_to(sites.astype(np.uint64) & np.uint64(MASK32), shape),
        np.broadcast_to(reps.astype(np.uint64), shape),
        k0, k1,
    )
    u = ((x0 >> np.uint64(5)).astype(np.float64) * 67108864.0 + (x1 >> np.uint64(6)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


# --------------------------------------------------------------------------
# compiled kernel


@numba.njit(inline="always")
def _normal(step, site, rep, k0, k1):
    c0 = np.uint64(step) & np.uint64(0xFFFFFFFF)
    c1 = np.uint64(step) >> np.uint64(32)
    c2 = np.uint64(site) & np.uint64(0xFFFFFFFF)
    c3 = np.uint64(rep) & np.uint64(0xFFFFFFFF)
    ka = k0
    kb = k1
    for _ in range(10):
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        c0, c1, c2, c3 = (
            (p1 >> np.uint64(32)) ^ c1 ^ ka,
            p1 & np.uint64(0xFFFFFFFF),
            (p0 >> np.uint64(32)) ^ c3 ^ kb,
            p0 & np.uint64(0xFFFFFFFF),
        )
        ka = (ka + np.uint64(0x9E3779B9)) & np.uint64(0xFFFFFFFF)
        kb = (kb + np.uint64(0xBB67AE85)) & np.uint64(0xFFFFFFFF)
    u = (float(c0 >> np.uint64(5)) * 67108864.0 + float(c1 >> np.uint64(6)) + 0.5) * 1.1102230246251565e-16
    return _ndtri_c(u)


@numba.njit
def _block_kernel(step0, n_steps, m, reps, coarse_sites, K, k0, k1, scale, out):
    for a in range(n_steps):
        for b in range(reps.size):
            rep = reps[b]
            for c in range(coarse_sites.size):
                base_site = coarse_sites[c] * K
                acc = 0.0
                for f in range(m):
                    step = (step0 + a) * m + f
                    for q in range(K):
                        acc += _normal(step, base_site + q, rep, k0, k1)
                out[a, b, c] = acc * scale


# --------------------------------------------------------------------------
# public types


@dataclass(frozen=True)
class NoiseSource:
    """Keyed generator of Brownian increments at the finest (base) resolution."""

    master_seed: int
    base_epsilon: float
    base_dt: float
    replica_id: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise ContractError("master_seed must be an unsigned 64-bit integer")
        if not (0 <= int(self.replica_id) < 2**32):
            raise ContractError("replica_id must fit in 32 bits")
        if not (self.base_epsilon > 0 and self.base_dt > 0):
            raise ContractError("base_epsilon and base_dt must be positive")

    @property
    def key(self) -> tuple[int, int]:
        return _key(int(self.master_seed))


def site_increment(src: NoiseSource, site_index: int, step_index: int) -> float:
    """Base-resolution increment dB ~ N(0, base_dt) for one key."""
    if step_index < 0:
        raise ContractError("step_index must be >= 0")
    k0, k1 = src.key
    z = _normal(np.int64(step_index), np.int64(site_index), np.int64(src.replica_id), np.uint64(k0), np.uint64(k1))
    return math.sqrt(src.base_dt) * z


@dataclass(frozen=True)
class IncrementProvider:
    """Increments at spacing ``space_factor * base_epsilon`` and step ``time_factor * base_dt``.

    Site arguments are local indices; they are shifted by ``origin_index`` to
    global indices before keying, so domains that overlap in space share
    increments on their common sites.
    """

    source: NoiseSource
    space_factor: int = 1
    time_factor: int = 1
    origin_index: int = 0
    n_sites: int | None = None

    def __post_init__(self):
        k = self.space_factor
        if k < 1 or k & (k - 1):
            raise ContractError("space_factor must be a power of two")
        if self.time_factor < 1:
            raise ContractError("time_factor must be a positive integer")

    @property
    def epsilon(self) -> float:
        return self.source.base_epsilon * self.space_factor

    @property
    def dt(self) -> float:
        return self.source.base_dt * self.time_factor

    def on(self, domain) -> "IncrementProvider":
        """Bind to a lattice domain at this provider's spacing."""
        if not math.isclose(domain.epsilon, self.epsilon, rel_tol=1e-12):
            raise ContractError(f"domain spacing {domain.epsilon!r} != provider spacing {self.epsilon!r}")
        return replace(self, origin_index=domain.origin_index, n_sites=domain.n_sites)

    def coarsen_time(self, m: int) -> "IncrementProvider":
        return replace(self, time_factor=self.time_factor * int(m))

    def _raw(self, step0, n_steps, replicas, sites_global, scale):
        reps = np.ascontiguousarray(replicas, dtype=np.int64)
        sites = np.ascontiguousarray(sites_global, dtype=np.int64)
        out = np.empty((n_steps, reps.size, sites.size))
        k0, k1 = self.source.key
        _block_kernel(np.int64(step0), np.int64(n_steps), np.int64(self.time_factor), reps, sites,
                      np.int64(self.space_factor), np.uint64(k0), np.uint64(k1), float(scale), out)
        return out

    def block(self, step0: int, n_steps: int, replicas=None, sites=None) -> np.ndarray:
        """Increments for coarse steps ``step0 .. step0 + n_steps - 1``.

        Returns an array of shape ``(n_steps, n_replicas, n_sites)``; ``sites``
        defaults to all sites of the bound domain.
        """
        if step0 < 0:
            raise ContractError("step index must be >= 0")
        if replicas is None:
            replicas = [self.source.replica_id]
        if sites is None:
            if self.n_sites is None:
                raise ContractError("provider is not bound to a domain; pass sites")
            sites = np.arange(self.n_sites)
        sites_global = np.asarray(sites, dtype=np.int64) + self.origin_index
        k = self.space_factor.bit_length() - 1
        scale = math.sqrt(self.source.base_dt) * 2.0 ** (-0.5 * k)
        return self._raw(step0, n_steps, replicas, sites_global, scale)

    def increment(self, site: int, step: int) -> float:
        return float(self.block(step, 1, sites=[site])[0, 0, 0])


def coupled_view(src: NoiseSource, domain) -> IncrementProvider:
    """Provider for a domain at the base spacing, keyed by global site index."""
    if not math.isclose(domain.epsilon, src.base_epsilon, rel_tol=1e-12):
        raise ContractError("coupled_view needs domain.epsilon == base_epsilon; use refine for coarser lattices")
    return IncrementProvider(src).on(domain)


def _dyadic_factor(ratio: float, what: str) -> int:
    k = round(math.log2(ratio)) if ratio > 0 else -1
    if k < 0 or not math.isclose(ratio, 2.0**k, rel_tol=1e-9):
        raise ContractError(f"{what} ratio {ratio!r} is not a power of two >= 1")
    return 2**k


def refine(src: NoiseSource, coarse_epsilon: float) -> IncrementProvider:
    """Provider at spacing ``coarse_epsilon = 2**k * base_epsilon`` summing fine constituents."""
    return IncrementProvider(src, _dyadic_factor(coarse_epsilon / src.base_epsilon, "spacing"))


def provider_for(src: NoiseSource, domain, dt: float) -> IncrementProvider:
    """Provider bound to ``domain`` with steps of ``dt`` (an integer multiple of base_dt)."""
    prov = refine(src, domain.epsilon)
    m = dt / src.base_dt
    mi = round(m)
    if mi < 1 or not math.isclose(m, mi, rel_tol=1e-9):
        raise ContractError(f"dt={dt!r} is not an integer multiple of base_dt={src.base_dt!r}")
    return prov.coarsen_time(mi).on(domain)
