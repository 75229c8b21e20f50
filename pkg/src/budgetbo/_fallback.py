"""Pure-Python versions of the compiled loops in ``_core.pyx``."""
import math

import numpy as np
from scipy.special import ndtr, ndtri

_TAIL = 1e-300


def _trunc_std_normal(a, b, u):
    # inverse-CDF draw from N(0, 1) restricted to [a, b]; works on the
    # far side of the origin to keep tail probabilities representable
    if a >= 0.0:
        pa = float(ndtr(-a))
        pb = 0.0 if b == math.inf else float(ndtr(-b))
        if pa - pb < _TAIL:
            z = a - math.log1p(-u) / a
        else:
            z = -float(ndtri(pb + u * (pa - pb)))
    elif b <= 0.0:
        pa = float(ndtr(a))
        pb = float(ndtr(b))
        if pb - pa < _TAIL:
            z = b + math.log1p(-u) / b
        else:
            z = float(ndtri(pa + u * (pb - pa)))
    else:
        pa = float(ndtr(a))
        pb = 1.0 if b == math.inf else float(ndtr(b))
        z = float(ndtri(pa + u * (pb - pa)))
    return min(max(z, a), b)


def gibbs_tmvn(mean, prec, lower, upper, x0, uniforms, burn_in, thin):
    k = mean.shape[0]
    n_sweeps = uniforms.shape[0]
    n_out = max((n_sweeps - burn_in) // thin, 0)
    samples = np.empty((n_out, k))
    x = [float(v) for v in x0]
    m = [float(v) for v in mean]
    lo = [float(v) for v in lower]
    hi = [float(v) for v in upper]
    P = prec.tolist()
    sds = (1.0 / np.sqrt(np.diagonal(prec))).tolist()
    U = uniforms.tolist()
    row = 0
    for s in range(n_sweeps):
        u_row = U[s]
        for j in range(k):
            pj = P[j]
            acc = 0.0
            for i in range(k):
                if i != j:
                    acc = acc + pj[i] * (x[i] - m[i])
            mu = m[j] - acc / pj[j]
            sd = sds[j]
            v = mu + sd * _trunc_std_normal((lo[j] - mu) / sd, (hi[j] - mu) / sd, u_row[j])
            x[j] = min(max(v, lo[j]), hi[j])
        if s >= burn_in and (s - burn_in) % thin == thin - 1 and row < n_out:
            samples[row] = x
            row += 1
    return samples


def qei_reduce(mean, chol, base, y_best):
    y = mean[None, :] + base @ chol.T - y_best
    imp = np.maximum(y.max(axis=1), 0.0)
    n = imp.shape[0]
    m = float(imp.mean())
    if n > 1:
        return m, float(imp.std(ddof=1) / math.sqrt(n))
    return m, 0.0
