"""Pure numpy/Python fallback for the compiled kernels.

Same contracts as ``_core``: a xoshiro256** stream generator and the
one-sided Jacobi row-orthogonalization sweep.  The PRNG loop runs at
Python speed; the Jacobi sweep is vectorized over disjoint row pairs
(round-robin tournament ordering), so it stays usable on desk-scale
matrices even without the extension.
"""

import numpy as np

_MASK = (1 << 64) - 1
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def _stream(state, count):
    """Yield `count` raw xoshiro256** outputs, updating `state` in place."""
    s0, s1, s2, s3 = (int(w) for w in state)
    out = [0] * count
    for k in range(count):
        out[k] = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[0] = np.uint64(s0)
    state[1] = np.uint64(s1)
    state[2] = np.uint64(s2)
    state[3] = np.uint64(s3)
    return out


def fill_uniform(state, out):
    """Fill 1-D float64 `out` with uniforms in [0, 1); `state` is uint64[4]."""
    raw = _stream(state, out.shape[0])
    for k, r in enumerate(raw):
        out[k] = (r >> 11) * _INV_2_53


def next_u64_block(state, out):
    """Fill 1-D uint64 `out` with raw generator words."""
    raw = _stream(state, out.shape[0])
    for k, r in enumerate(raw):
        out[k] = r


def _tournament_stages(m):
    # Round-robin schedule: m-1 stages of disjoint pairs covering all (i, j).
    players = list(range(m))
    if m % 2:
        players.append(-1)
    k = len(players)
    stages = []
    for _ in range(k - 1):
        ii, jj = [], []
        for t in range(k // 2):
            a, b = players[t], players[k - 1 - t]
            if a >= 0 and b >= 0:
                ii.append(min(a, b))
                jj.append(max(a, b))
        stages.append((np.asarray(ii, dtype=np.intp), np.asarray(jj, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return stages


def jacobi_rows(at, vt, max_sweeps, tol):
    """One-sided Jacobi: orthogonalize the rows of `at` in place.

    The same plane rotations are applied to the rows of `vt` (which the
    caller initializes to the identity).  A pair is rotated only when its
    normalized off-diagonal |a_i . a_j| / (|a_i| |a_j|) exceeds `tol`, so a
    converged sweep leaves both matrices untouched.

    Returns (sweeps_used, last_sweep_max_off).
    """
    m = at.shape[0]
    if m < 2:
        return 0, 0.0
    stages = _tournament_stages(m)
    # Rows below this share of the largest norm carry no resolvable direction
    # (the SVD wrapper replaces them); rotating them against live rows can
    # leave exactly-parallel roundoff remnants that never converge.
    dim_eps = max(at.shape) * np.finfo(np.float64).eps
    off = 0.0
    for sweep in range(1, max_sweeps + 1):
        off = 0.0
        floor = np.einsum("ij,ij->i", at, at).max() * dim_eps * dim_eps
        for ii, jj in stages:
            p = at[ii]
            q = at[jj]
            alpha = np.einsum("ij,ij->i", p, p)
            beta = np.einsum("ij,ij->i", q, q)
            gamma = np.einsum("ij,ij->i", p, q)
            denom = np.sqrt(alpha * beta)
            rel = np.zeros_like(gamma)
            live = (alpha > floor) & (beta > floor)
            rel[live] = np.abs(gamma[live]) / denom[live]
            stage_off = float(rel.max()) if rel.size else 0.0
            if stage_off > off:
                off = stage_off
            rot = rel > tol
            if not rot.any():
                continue
            ri, rj = ii[rot], jj[rot]
            ga, al, be = gamma[rot], alpha[rot], beta[rot]
            zeta = (be - al) / (2.0 * ga)
            t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = c * t[:, None]
            for mat in (at, vt):
                pi = mat[ri]
                pj = mat[rj]
                mat[ri] = c * pi - s * pj
                mat[rj] = s * pi + c * pj
        if off <= tol:
            return sweep, off
    return max_sweeps, off
