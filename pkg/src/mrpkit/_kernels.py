"""Hot numeric kernels with two interchangeable backends.

The sampler and prediction paths spend nearly all their time in the handful
of array primitives defined here. Each primitive has a numba ``@njit``
build and a pure-numpy build; the active backend is chosen at import time.
Set ``MRPKIT_DISABLE_NUMBA=1`` (or uninstall numba) to force the numpy
path. ``benchmarks/bench_kernels.py`` times the two side by side.

Both backends implement identical arithmetic; results may differ in the
last floating-point ulps because numpy reductions use pairwise summation
while the compiled loops accumulate sequentially. Each backend is fully
deterministic on its own.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "bern_loglik",
    "add_matvec",
    "add_gather",
    "sub_gather_mean",
    "quad_diff",
    "quad_form",
    "sumsq",
    "compose_bym2",
    "compute_eta",
    "numpy_backend",
    "numba_backend",
]

_FLAG = os.environ.get("MRPKIT_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _bern_loglik_np(y, eta, lo, hi):
    ys = y[lo:hi]
    es = eta[lo:hi]
    return float(np.dot(ys, es) - np.logaddexp(0.0, es).sum())


def _add_matvec_np(out, eta, x, delta, lo, hi):
    np.dot(x[lo:hi], delta, out=out[lo:hi])
    out[lo:hi] += eta[lo:hi]


def _add_gather_np(out, eta, vals, idx, lo, hi):
    out[lo:hi] = eta[lo:hi] + vals[idx[lo:hi]]


def _sub_gather_mean_np(x):
    return x - x.mean()


def _quad_diff_np(x):
    if x.shape[0] < 2:
        return 0.0
    d = np.diff(x)
    return float(np.dot(d, d))


def _quad_form_np(q, x):
    return float(x @ q @ x)


def _sumsq_np(x):
    return float(np.dot(x, x))


def _compose_bym2_np(out, u, v, island, coef_u, coef_v, coef_island):
    out[:] = np.where(island, coef_island * v, coef_u * u + coef_v * v)


def _compute_eta_np(out, x, coef, alpha, gamma, omega, cohort_idx, wave_idx, omega_slot):
    np.dot(x, coef, out=out)
    if alpha.shape[0]:
        out += alpha[cohort_idx]
    if gamma.shape[0]:
        out += gamma[wave_idx]
    if omega.shape[0]:
        out += omega[omega_slot]


# ---------------------------------------------------------------------------
# numba implementations (same arithmetic, loop form)
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(nogil=True)
    def _bern_loglik_nb(y, eta, lo, hi):
        total = 0.0
        for i in range(lo, hi):
            e = eta[i]
            if e > 0.0:
                total += (y[i] - 1.0) * e - np.log1p(np.exp(-e))
            else:
                total += y[i] * e - np.log1p(np.exp(e))
        return total

    @njit(nogil=True)
    def _add_matvec_nb(out, eta, x, delta, lo, hi):
        p = delta.shape[0]
        for i in range(lo, hi):
            acc = eta[i]
            for j in range(p):
                acc += x[i, j] * delta[j]
            out[i] = acc

    @njit(nogil=True)
    def _add_gather_nb(out, eta, vals, idx, lo, hi):
        for i in range(lo, hi):
            out[i] = eta[i] + vals[idx[i]]

    @njit(nogil=True)
    def _sub_gather_mean_nb(x):
        m = 0.0
        n = x.shape[0]
        for i in range(n):
            m += x[i]
        m /= n
        out = np.empty(n)
        for i in range(n):
            out[i] = x[i] - m
        return out

    @njit(nogil=True)
    def _quad_diff_nb(x):
        total = 0.0
        for t in range(1, x.shape[0]):
            d = x[t] - x[t - 1]
            total += d * d
        return total

    @njit(nogil=True)
    def _quad_form_nb(q, x):
        n = x.shape[0]
        total = 0.0
        for i in range(n):
            row = 0.0
            for j in range(n):
                row += q[i, j] * x[j]
            total += x[i] * row
        return total

    @njit(nogil=True)
    def _sumsq_nb(x):
        total = 0.0
        for i in range(x.shape[0]):
            total += x[i] * x[i]
        return total

    @njit(nogil=True)
    def _compose_bym2_nb(out, u, v, island, coef_u, coef_v, coef_island):
        for s in range(out.shape[0]):
            if island[s]:
                out[s] = coef_island * v[s]
            else:
                out[s] = coef_u * u[s] + coef_v * v[s]

    @njit(nogil=True)
    def _compute_eta_nb(out, x, coef, alpha, gamma, omega, cohort_idx, wave_idx, omega_slot):
        n = x.shape[0]
        p = coef.shape[0]
        has_alpha = alpha.shape[0] > 0
        has_gamma = gamma.shape[0] > 0
        has_omega = omega.shape[0] > 0
        for i in range(n):
            acc = 0.0
            for j in range(p):
                acc += x[i, j] * coef[j]
            if has_alpha:
                acc += alpha[cohort_idx[i]]
            if has_gamma:
                acc += gamma[wave_idx[i]]
            if has_omega:
                acc += omega[omega_slot[i]]
            out[i] = acc


_NUMPY_BACKEND = {
    "bern_loglik": _bern_loglik_np,
    "add_matvec": _add_matvec_np,
    "add_gather": _add_gather_np,
    "sub_gather_mean": _sub_gather_mean_np,
    "quad_diff": _quad_diff_np,
    "quad_form": _quad_form_np,
    "sumsq": _sumsq_np,
    "compose_bym2": _compose_bym2_np,
    "compute_eta": _compute_eta_np,
}

if HAS_NUMBA:
    _NUMBA_BACKEND = {
        "bern_loglik": _bern_loglik_nb,
        "add_matvec": _add_matvec_nb,
        "add_gather": _add_gather_nb,
        "sub_gather_mean": _sub_gather_mean_nb,
        "quad_diff": _quad_diff_nb,
        "quad_form": _quad_form_nb,
        "sumsq": _sumsq_nb,
        "compose_bym2": _compose_bym2_nb,
        "compute_eta": _compute_eta_nb,
    }
else:
    _NUMBA_BACKEND = None


def numpy_backend():
    """Return the dict of pure-numpy kernel implementations."""
    return dict(_NUMPY_BACKEND)


def numba_backend():
    """Return the dict of numba implementations, or None when unavailable."""
    return dict(_NUMBA_BACKEND) if _NUMBA_BACKEND is not None else None


if HAS_NUMBA and not _DISABLED:
    BACKEND = "numba"
    _ACTIVE = _NUMBA_BACKEND
else:
    BACKEND = "numpy"
    _ACTIVE = _NUMPY_BACKEND

bern_loglik = _ACTIVE["bern_loglik"]
add_matvec = _ACTIVE["add_matvec"]
add_gather = _ACTIVE["add_gather"]
sub_gather_mean = _ACTIVE["sub_gather_mean"]
quad_diff = _ACTIVE["quad_diff"]
quad_form = _ACTIVE["quad_form"]
sumsq = _ACTIVE["sumsq"]
compose_bym2 = _ACTIVE["compose_bym2"]
compute_eta = _ACTIVE["compute_eta"]
