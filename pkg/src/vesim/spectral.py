"""Periodic grids, Fourier transforms, and spectral differential calculus.

Everything lives on the torus [0, 2pi)^dim sampled on n points per axis, so
wavenumbers are integers. The forward DFT is unnormalized and the inverse
carries the 1/n^dim factor (numpy/scipy convention); Parseval factors are
folded into the norm routines.

Index conventions follow continuum mechanics usage:

    (grad v)_{ij} = dv_i/dx_j          gradient adds a trailing index
    (div F)_i     = d_j F_{ij}         row divergence

Derivative multipliers zero the Nyquist wavenumber on each axis (its sign is
ambiguous, so odd derivatives are ill-defined there). All derived quantities
(Laplacian, projection, Sobolev weights) use the same zeroed wavenumbers so
identities like div(grad f) == laplacian(f) hold to roundoff.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.fft

from .errors import ContractError, RankError, SymmetryError

PHYSICAL = "physical"
SPECTRAL = "spectral"

#: rank -> number of components, as a function of dim. Rank 3 is the
#: antisymmetric-pair layout produced by curl_tensor: components are indexed
#: (i, p) where p runs over ordered pairs j < m of derivative axes.
_PAIRS = {2: [(0, 1)], 3: [(0, 1), (0, 2), (1, 2)]}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("VESIM_THREADS", "1")))
    except ValueError:
        return 1


def fftn(x: np.ndarray, axes) -> np.ndarray:
    return scipy.fft.fftn(x, axes=axes, workers=_workers())


def ifftn(x: np.ndarray, axes) -> np.ndarray:
    return scipy.fft.ifftn(x, axes=axes, workers=_workers())


class Grid:
    """Uniform periodic lattice on [0, 2pi)^dim with cached wavenumber arrays.

    Parameters
    ----------
    dim : 2 or 3
    n : points per axis, a power of two >= 8
    """

    def __init__(self, dim: int, n: int):
        if dim not in (2, 3):
            raise ContractError(f"dim must be 2 or 3, got {dim}")
        if n < 8 or (n & (n - 1)) != 0:
            raise ContractError(f"n must be a power of two >= 8, got {n}")
        self.dim = dim
        self.n = n
        self.shape = (n,) * dim
        self.npoints = n**dim
        self.dx = 2.0 * np.pi / n

        k1 = np.fft.fftfreq(n, d=1.0 / n).astype(np.float64)
        k1[n // 2] = n // 2  # wavenumber set {-n/2+1, ..., n/2}; sign only enters squared
        kd1 = k1.copy()
        kd1[n // 2] = 0.0  # Nyquist carries no derivative

        # Axis a wavenumbers broadcast against (..., n, n[, n]) data.
        def _along(arr, a):
            sh = [1] * dim
            sh[a] = n
            return arr.reshape(sh)

        self.k = [_along(k1, a) for a in range(dim)]
        self.kd = [_along(kd1, a) for a in range(dim)]
        self.k2d = sum(kd * kd for kd in self.kd)
        inv = np.zeros(self.shape)
        nz = self.k2d > 0
        inv[nz] = 1.0 / self.k2d[nz]
        self.k2d_inv = inv  # zero where all derivative wavenumbers vanish

        cut = n / 3.0  # two-thirds rule: drop any |k_j| > n/3
        keep = np.ones(self.shape, dtype=bool)
        for a in range(dim):
            keep &= np.abs(self.k[a]) <= cut
        self.dealias_mask = keep

        # dense (dim, n, n[, n]) derivative wavenumbers, for batched kernels
        self.kd_full = np.stack([np.broadcast_to(kd, self.shape) for kd in self.kd])

        # Parseval: ||f||_{L2}^2 = scale * sum_k |f_hat_k|^2 for the
        # unnormalized forward transform.
        self.parseval = (2.0 * np.pi) ** dim / float(n ** (2 * dim))

        x1 = np.arange(n) * self.dx
        self.x = [_along(x1, a) for a in range(dim)]

    @property
    def spatial_axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    def ncomp(self, rank: int) -> int:
        if rank in (0, 1, 2):
            return self.dim**rank
        if rank == 3:
            return self.dim * len(_PAIRS[self.dim])
        raise RankError(f"unsupported rank {rank}")

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.dim, self.n) == (other.dim, other.n)

    def __hash__(self):
        return hash((self.dim, self.n))

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"


class Field:
    """Scalar / vector / rank-2 tensor samples over a Grid.

    Data is stored component-major: shape (ncomp, n, n[, n]). Rank-2
    components are flattened row-major, comp = i*dim + j. Physical data is
    real float64; spectral data is complex128 and Hermitian-symmetric.
    """

    __slots__ = ("grid", "rank", "data", "repr")

    def __init__(self, grid: Grid, rank: int, data: np.ndarray, repr: str = PHYSICAL):
        if repr not in (PHYSICAL, SPECTRAL):
            raise ContractError(f"repr must be physical or spectral, got {repr!r}")
        ncomp = grid.ncomp(rank)
        data = np.asarray(data)
        if data.shape != (ncomp,) + grid.shape:
            raise ContractError(
                f"data shape {data.shape} does not match rank-{rank} field on {grid}"
            )
        if repr == PHYSICAL:
            data = data.astype(np.float64, copy=False)
        else:
            data = data.astype(np.complex128, copy=False)
        self.grid = grid
        self.rank = rank
        self.data = data
        self.repr = repr

    @classmethod
    def zeros(cls, grid: Grid, rank: int, repr: str = PHYSICAL) -> "Field":
        dtype = np.float64 if repr == PHYSICAL else np.complex128
        return cls(grid, rank, np.zeros((grid.ncomp(rank),) + grid.shape, dtype), repr)

    @property
    def ncomp(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "Field":
        return Field(self.grid, self.rank, self.data.copy(), self.repr)

    def comp(self, i: int, j: int | None = None) -> np.ndarray:
        """Component view; pass (i, j) for rank-2 fields."""
        if j is None:
            return self.data[i]
        return self.data[i * self.grid.dim + j]

    def _binary(self, other, op):
        if not isinstance(other, Field):
            return NotImplemented
        if (self.grid, self.rank, self.repr) != (other.grid, other.rank, other.repr):
            raise ContractError("field algebra requires matching grid/rank/repr")
        return Field(self.grid, self.rank, op(self.data, other.data), self.repr)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, a):
        if isinstance(a, (int, float, np.floating)):
            return Field(self.grid, self.rank, self.data * a, self.repr)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, self.rank, -self.data, self.repr)

    def __repr__(self):
        return f"Field(rank={self.rank}, repr={self.repr}, grid={self.grid})"


# ---------------------------------------------------------------------------
# transforms


def to_spectral(f: Field) -> Field:
    """Forward DFT per component (unnormalized)."""
    if f.repr != PHYSICAL:
        raise ContractError("to_spectral expects a physical-repr field")
    return Field(f.grid, f.rank, fftn(f.data, f.grid.spatial_axes), SPECTRAL)


def to_physical(f: Field, tol: float = 1e-12) -> Field:
    """Inverse DFT; rejects input whose imaginary residue exceeds `tol` (relative)."""
    if f.repr != SPECTRAL:
        raise ContractError("to_physical expects a spectral-repr field")
    z = ifftn(f.data, f.grid.spatial_axes)
    scale = np.max(np.abs(z.real))
    resid = np.max(np.abs(z.imag))
    if resid > tol * max(scale, 1e-300):
        raise SymmetryError(
            f"non-Hermitian spectrum: imaginary residue {resid:.3e} "
            f"exceeds {tol:.1e} relative to {scale:.3e}"
        )
    return Field(f.grid, f.rank, z.real, PHYSICAL)


def _spec(f: Field) -> Field:
    return f if f.repr == SPECTRAL else to_spectral(f)


def _match_repr(out_spec: Field, like: Field) -> Field:
    return out_spec if like.repr == SPECTRAL else to_physical(out_spec)


# ---------------------------------------------------------------------------
# differential operators


def gradient(f: Field) -> Field:
    """(grad f)_{c j} = d_j f_c, returned at rank + 1 in the input repr."""
    if f.rank > 1:
        raise RankError("gradient supports rank 0 and 1 inputs")
    g = f.grid
    fh = _spec(f).data
    out = np.empty((f.ncomp * g.dim,) + g.shape, dtype=np.complex128)
    for c in range(f.ncomp):
        for a in range(g.dim):
            out[c * g.dim + a] = 1j * g.kd[a] * fh[c]
    return _match_repr(Field(g, f.rank + 1, out, SPECTRAL), f)


def divergence(f: Field) -> Field:
    """Vector: d_j v_j. Tensor: (div F)_i = d_j F_{ij}."""
    if f.rank not in (1, 2):
        raise RankError("divergence supports rank 1 and 2 inputs")
    g = f.grid
    fh = _spec(f).data
    if f.rank == 1:
        out = np.zeros((1,) + g.shape, dtype=np.complex128)
        for a in range(g.dim):
            out[0] += 1j * g.kd[a] * fh[a]
    else:
        out = np.zeros((g.dim,) + g.shape, dtype=np.complex128)
        for i in range(g.dim):
            for a in range(g.dim):
                out[i] += 1j * g.kd[a] * fh[i * g.dim + a]
    return _match_repr(Field(g, f.rank - 1, out, SPECTRAL), f)


def laplacian(f: Field) -> Field:
    """Spectral Laplacian, any rank; equals div(grad f) exactly for rank <= 1."""
    g = f.grid
    fh = _spec(f).data
    return _match_repr(Field(g, f.rank, -g.k2d * fh, SPECTRAL), f)


def curl_tensor(E: Field) -> Field:
    """Antisymmetrized derivative d_m E_{ij} - d_j E_{im} for ordered pairs j < m.

    Output is the pair-layout rank-3 field: component (i, p) with p indexing
    pairs (j, m), j < m, stored as i * npairs + p.
    """
    if E.rank != 2:
        raise RankError("curl_tensor expects a rank-2 field")
    g = E.grid
    pairs = _PAIRS[g.dim]
    Eh = _spec(E).data
    out = np.empty((g.dim * len(pairs),) + g.shape, dtype=np.complex128)
    for i in range(g.dim):
        for p, (j, m) in enumerate(pairs):
            out[i * len(pairs) + p] = (
                1j * g.kd[m] * Eh[i * g.dim + j] - 1j * g.kd[j] * Eh[i * g.dim + m]
            )
    return _match_repr(Field(g, 3, out, SPECTRAL), E)


def pair_indices(dim: int):
    """Ordered derivative-axis pairs (j, m), j < m, used by curl_tensor."""
    return tuple(_PAIRS[dim])


def leray_project(v: Field) -> Field:
    """Project onto divergence-free fields: v_hat -> (I - k k^T/|k|^2) v_hat.

    Modes with no derivative wavenumber (the mean, pure-Nyquist lines) pass
    through unchanged. Idempotent; annihilates gradients.
    """
    if v.rank != 1:
        raise RankError("leray_project expects a vector field")
    g = v.grid
    vh = _spec(v).data.copy()
    kdotv = np.zeros(g.shape, dtype=np.complex128)
    for a in range(g.dim):
        kdotv += g.kd[a] * vh[a]
    kdotv *= g.k2d_inv
    for a in range(g.dim):
        vh[a] -= g.kd[a] * kdotv
    return _match_repr(Field(g, 1, vh, SPECTRAL), v)


def dealias(f: Field) -> Field:
    """Zero every mode with any |k_j| > n/3 (two-thirds rule)."""
    if f.repr != SPECTRAL:
        raise ContractError("dealias expects a spectral-repr field")
    return Field(f.grid, f.rank, f.data * f.grid.dealias_mask, SPECTRAL)


# ---------------------------------------------------------------------------
# norms and inner products

MAX_SOBOLEV_ORDER = 4


def sobolev_norm(f: Field, s: int) -> float:
    """H^s norm via sum_k (1+|k|^2)^s |f_hat|^2, summed over components.

    s = 0 is the L2 norm. Supported for integer 0 <= s <= 4.
    """
    if not (0 <= int(s) <= MAX_SOBOLEV_ORDER) or int(s) != s:
        raise ContractError(f"Sobolev order must be an integer in [0, {MAX_SOBOLEV_ORDER}]")
    g = f.grid
    fh = _spec(f).data
    w = (1.0 + g.k2d) ** int(s)
    total = float(np.sum(w * (fh.real**2 + fh.imag**2)))
    return float(np.sqrt(g.parseval * total))


def l2_norm_sq(f: Field) -> float:
    """Squared L2 norm over all components (Parseval-exact)."""
    g = f.grid
    if f.repr == PHYSICAL:
        return float(np.sum(f.data**2)) * g.dx**g.dim
    return g.parseval * float(np.sum(f.data.real**2 + f.data.imag**2))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(l2_norm_sq(f)))


def linf_norm(f: Field) -> float:
    """Max pointwise magnitude over components (physical space)."""
    p = f if f.repr == PHYSICAL else to_physical(_spec(f))
    return float(np.max(np.abs(p.data))) if p.data.size else 0.0


def inner(f: Field, g_: Field) -> float:
    """L2 inner product; both fields must share grid, rank, and repr."""
    if (f.grid, f.rank) != (g_.grid, g_.rank):
        raise ContractError("inner product requires matching grid and rank")
    if f.repr == PHYSICAL and g_.repr == PHYSICAL:
        return float(np.sum(f.data * g_.data)) * f.grid.dx**f.grid.dim
    fh, gh = _spec(f).data, _spec(g_).data
    return f.grid.parseval * float(np.sum(fh.conj() * gh).real)
