"""Dense linear algebra, proximal operators, and a deterministic seeded PRNG.

Matrices are plain 2-D float64 numpy arrays (row-major).  The SVD is a
one-sided Jacobi iteration running on the kernel backend (compiled when
available, pure numpy otherwise); the PRNG is xoshiro256** seeded through
splitmix64, so identical seeds give identical streams on every platform.
"""

import io
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels

_MASK = (1 << 64) - 1

SVD_MAX_SWEEPS = 60
SVD_OFF_TOL = 1e-12


class SvdConvergenceError(RuntimeError):
    """Jacobi sweeps exhausted before the off-diagonal residual dropped below tolerance."""

    def __init__(self, message, off_diagonal):
        super().__init__(message)
        self.off_diagonal = off_diagonal


def _splitmix64(x):
    """One splitmix64 step from counter `x`: returns (advanced counter, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, (z ^ (z >> 31)) & _MASK


class Rng:
    """xoshiro256** pseudo-random generator.

    Single-owner by convention: never share an instance across threads.
    Parallel work derives independent generators via :meth:`child`.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        ctr = self.seed
        words = []
        for _ in range(4):
            ctr, w = _splitmix64(ctr)
            words.append(w)
        self._state = np.array(words, dtype=np.uint64)

    def child(self, stream_index):
        """Independent generator for stream `stream_index` of this seed."""
        _, derived = _splitmix64(self.seed ^ (int(stream_index) & _MASK))
        return Rng(derived)

    def next_u64(self):
        out = np.empty(1, dtype=np.uint64)
        _kernels.next_u64_block(self._state, out)
        return int(out[0])

    def u64_block(self, count):
        out = np.empty(int(count), dtype=np.uint64)
        _kernels.next_u64_block(self._state, out)
        return out

    def random(self, shape=None):
        """Uniform draws in [0, 1): a float for shape=None, else an array."""
        if shape is None:
            out = np.empty(1, dtype=np.float64)
            _kernels.fill_uniform(self._state, out)
            return float(out[0])
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        count = 1
        for d in shape:
            count *= int(d)
        out = np.empty(count, dtype=np.float64)
        _kernels.fill_uniform(self._state, out)
        return out.reshape(shape)

    def uniform(self, low, high, shape=None):
        return low + (high - low) * self.random(shape)

    def normal(self, shape=None, mean=0.0, sigma=1.0):
        """Gaussian draws via Box-Muller; consumes 2*ceil(n/2) uniforms."""
        scalar = shape is None
        if scalar:
            shape = (1,)
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        count = 1
        for d in shape:
            count *= int(d)
        pairs = (count + 1) // 2
        u = self.random(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))  # 1-u in (0,1], log is finite
        angle = (2.0 * math.pi) * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        z = mean + sigma * z[:count]
        return float(z[0]) if scalar else z.reshape(shape)

    def permutation(self, n):
        """Deterministic Fisher-Yates shuffle of range(n)."""
        n = int(n)
        perm = np.arange(n)
        if n < 2:
            return perm
        raw = self.u64_block(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(raw[n - 1 - i]) % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def as_matrix(x, name="matrix"):
    """Coerce to a non-empty 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    return a


def matmul(a, b):
    """Matrix product with shape validation."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD `m = u @ diag(sigma) @ v.T` with orthonormal u, v columns."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def svd(m, max_sweeps=SVD_MAX_SWEEPS, tol=SVD_OFF_TOL):
    """One-sided Jacobi SVD.

    Iterates sweeps of plane rotations until every normalized column
    cross-product falls below `tol`; raises SvdConvergenceError (carrying
    the residual) if `max_sweeps` is not enough.
    """
    a = as_matrix(m, "m")
    rows, cols = a.shape
    if min(rows, cols) > 4096:
        raise ValueError(f"matrix too large for dense SVD: {a.shape}")
    transposed = rows < cols
    work = a.T if transposed else a  # n x r with n >= r
    at = work.T.copy()  # rows of `at` are the vectors to orthogonalize
    r, n = at.shape
    vt = np.eye(r)
    _, off = _kernels.jacobi_rows(at, vt, int(max_sweeps), float(tol))
    if off > tol:
        raise SvdConvergenceError(
            f"Jacobi SVD did not converge in {max_sweeps} sweeps "
            f"(off-diagonal residual {off:.3e} > {tol:.1e})",
            off,
        )
    sigma = np.sqrt(np.einsum("ij,ij->i", at, at))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    at = at[order]
    vt = vt[order]

    # Directions with negligible length are numerically meaningless; replace
    # them with an orthonormal completion so u always has orthonormal columns.
    cut = sigma[0] * max(rows, cols) * np.finfo(np.float64).eps
    u_rows = np.zeros_like(at)
    basis = []
    fill = []
    for k in range(r):
        if sigma[k] > cut:
            u_rows[k] = at[k] / sigma[k]
            basis.append(u_rows[k])
        else:
            fill.append(k)
    e = 0
    for k in fill:
        while True:
            cand = np.zeros(n)
            cand[e] = 1.0
            e += 1
            for _ in range(2):  # two Gram-Schmidt passes for orthogonality
                for bvec in basis:
                    cand -= (cand @ bvec) * bvec
            nrm = math.sqrt(cand @ cand)
            if nrm > 0.5:
                cand /= nrm
                break
        u_rows[k] = cand
        basis.append(cand)

    u = u_rows.T.copy()
    v = vt.T.copy()
    if transposed:
        u, v = v, u
    return SvdFactors(u=u, sigma=sigma, v=v)


def soft_threshold(m, tau):
    """Entrywise shrinkage sign(x) * max(|x| - tau, 0)."""
    a = as_matrix(m, "m")
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def svt(m, tau):
    """Singular value thresholding: shrink the spectrum by tau."""
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    f = svd(m)
    shrunk = np.maximum(f.sigma - tau, 0.0)
    return (f.u * shrunk) @ f.v.T


def norm_l1(m):
    return float(np.sum(np.abs(as_matrix(m, "m"))))


def norm_fro(m):
    return float(np.sqrt(np.sum(np.square(as_matrix(m, "m")))))


def norm_nuclear(m):
    return float(np.sum(svd(m).sigma))


class Norms:
    """Entry norms of one matrix; the nuclear norm is computed on first access."""

    def __init__(self, m):
        self._m = as_matrix(m, "m")
        self.l1 = norm_l1(self._m)
        self.fro = norm_fro(self._m)
        self._nuclear = None

    @property
    def nuclear(self):
        if self._nuclear is None:
            self._nuclear = norm_nuclear(self._m)
        return self._nuclear

    def __iter__(self):
        return iter((self.l1, self.fro, self.nuclear))


def norms(m):
    return Norms(m)


def orthonormal_columns(rng, n, k):
    """Seeded random n x k matrix with orthonormal columns (k <= n)."""
    if k > n:
        raise ValueError(f"cannot fit {k} orthonormal columns in dimension {n}")
    g = rng.normal((n, k))
    q = np.empty_like(g)
    for j in range(k):
        v = g[:, j].copy()
        for _ in range(2):
            for i in range(j):
                v -= (v @ q[:, i]) * q[:, i]
        nrm = math.sqrt(v @ v)
        if nrm < 1e-12:
            raise ValueError("degenerate direction while orthonormalizing")
        q[:, j] = v / nrm
    return q


# --- serialization -----------------------------------------------------------

RMAT_MAGIC = b"RMAT"
RMAT_VERSION = 1
_RMAT_HEADER = struct.Struct("<4sIQQ")


def rmat_bytes(m):
    a = as_matrix(m, "m")
    buf = io.BytesIO()
    buf.write(_RMAT_HEADER.pack(RMAT_MAGIC, RMAT_VERSION, a.shape[0], a.shape[1]))
    buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def rmat_from_bytes(data, offset=0):
    """Parse one RMAT block; returns (matrix, bytes consumed)."""
    head = data[offset : offset + _RMAT_HEADER.size]
    if len(head) < _RMAT_HEADER.size:
        raise ValueError("truncated RMAT header")
    magic, version, rows, cols = _RMAT_HEADER.unpack(head)
    if magic != RMAT_MAGIC:
        raise ValueError(f"bad RMAT magic {magic!r}")
    if version != RMAT_VERSION:
        raise ValueError(f"unsupported RMAT version {version}")
    count = rows * cols
    start = offset + _RMAT_HEADER.size
    raw = data[start : start + 8 * count]
    if len(raw) < 8 * count:
        raise ValueError("truncated RMAT payload")
    a = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(a)):
        raise ValueError("RMAT payload contains non-finite values")
    return a, _RMAT_HEADER.size + 8 * count


def write_rmat(path, m):
    with open(path, "wb") as fh:
        fh.write(rmat_bytes(m))


def read_rmat(path):
    with open(path, "rb") as fh:
        data = fh.read()
    a, used = rmat_from_bytes(data)
    if used != len(data):
        raise ValueError(f"trailing bytes after RMAT payload in {path}")
    return a


def write_csv(path, m):
    """Headerless CSV, '.' decimal, ',' separator; full float64 precision."""
    a = as_matrix(m, "m")
    with open(path, "w", newline="") as fh:
        for row in a:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_csv(path):
    a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"CSV matrix in {path} contains non-finite values")
    return a
