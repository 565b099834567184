"""Pure-NumPy versions of the compiled kernels.

Same algorithms and signatures as ``_kernels.pyx``; results agree to rounding.
"""
import numpy as np

LN2 = np.log(2.0)

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

# 15 abscissae on [-1, 1] and the matching Kronrod / embedded Gauss weights
_NODES = np.concatenate([-_XGK[:7], [0.0], _XGK[6::-1]])
_WK = np.concatenate([_WGK[:7], [_WGK[7]], _WGK[6::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[[13, 11, 9]] = _WG[:3]
_WG15[7] = _WG[3]


def _integrand(x, k, snr, weights):
    # x is user k's rate in nats
    val = x / LN2 * np.exp(x - np.expm1(x) / snr[k]) / snr[k]
    with np.errstate(over="ignore"):
        for j in range(len(snr)):
            if j == k:
                continue
            t = np.expm1((weights[k] / weights[j]) * x) / snr[j]
            val = val * -np.expm1(-t)
    return val


def _gk15(a, b, k, snr, weights):
    centr = 0.5 * (a + b)
    hlgth = 0.5 * (b - a)
    x = centr[:, None] + hlgth[:, None] * _NODES[None, :]
    f = _integrand(x, k, snr, weights)
    resk = f @ _WK
    resg = f @ _WG15
    return resk * hlgth, np.abs((resk - resg) * hlgth)


def _integrate_one(k, snr, weights, tail_gain, n_init, tol, max_panels, panels=False):
    upper = np.log1p(snr[k] * tail_gain)
    i = np.arange(n_init)
    a = upper * i / n_init
    b = upper * (i + 1) / n_init
    v, e = _gk15(a, b, k, snr, weights)
    while True:
        err = e.sum()
        if err <= tol or len(a) + (e > tol / len(a)).sum() > max_panels:
            out = (v.sum(), err, bool(err <= tol))
            return out + ((a, b),) if panels else out
        split = e > tol / len(a)
        mid = 0.5 * (a[split] + b[split])
        na = np.concatenate([a[split], mid])
        nb = np.concatenate([mid, b[split]])
        nv, ne = _gk15(na, nb, k, snr, weights)
        # keep panels ordered left to right so the sums match the compiled kernel
        order_a = np.concatenate([a[~split], na])
        order_b = np.concatenate([b[~split], nb])
        order_v = np.concatenate([v[~split], nv])
        order_e = np.concatenate([e[~split], ne])
        idx = np.argsort(order_a, kind="stable")
        a, b, v, e = order_a[idx], order_b[idx], order_v[idx], order_e[idx]


def _jac_row(k, snr, weights, a, b):
    centr = 0.5 * (a + b)
    hlgth = 0.5 * (b - a)
    x = (centr[:, None] + hlgth[:, None] * _NODES[None, :]).ravel()
    wt = (hlgth[:, None] * _WK[None, :]).ravel()
    base = x / LN2 * np.exp(x - np.expm1(x) / snr[k]) / snr[k]
    K = len(snr)
    fac = np.ones((K, x.size))
    dfac = np.zeros((K, x.size))
    with np.errstate(over="ignore"):
        for j in range(K):
            if j == k:
                continue
            c = weights[k] / weights[j]
            t = np.expm1(c * x) / snr[j]
            fac[j] = -np.expm1(-t)
            dfac[j] = np.exp(-t + c * x) * c * x / snr[j]
    row = np.zeros(K)
    for j in range(K):
        if j == k:
            continue
        others = np.prod(np.delete(fac, j, axis=0), axis=0)
        g = np.sum(wt * base * others * dfac[j])
        row[j] -= g
        row[k] += g
    return row


def phi_integrals(snr, weights, tail_gain, n_init, tol, max_panels, out_val, out_err, k=-1):
    snr = np.asarray(snr, dtype=float)
    weights = np.asarray(weights, dtype=float)
    ok = True
    users = range(len(snr)) if k < 0 else [k]
    for j in users:
        val, err, good = _integrate_one(j, snr, weights, tail_gain, n_init, tol, max_panels)
        out_val[j] = val
        out_err[j] = err
        ok = ok and good
    return ok


def schedule_slots(weights, snr, bandwidth, gains, winners, totals):
    rates = (bandwidth / LN2) * np.log1p(snr[None, :, None] * gains)
    score = weights[None, :, None] * rates
    best = np.argmax(score, axis=1)
    winners[...] = best
    awarded = np.take_along_axis(rates, best[:, None, :], axis=1)[:, 0, :]
    totals += np.bincount(best.ravel(), weights=awarded.ravel(), minlength=len(weights))


def phi_jacobian(snr, weights, tail_gain, n_init, tol, max_panels, out_val, out_err, out_jac):
    snr = np.asarray(snr, dtype=float)
    weights = np.asarray(weights, dtype=float)
    ok = True
    for j in range(len(snr)):
        val, err, good, (a, b) = _integrate_one(j, snr, weights, tail_gain, n_init, tol,
                                                max_panels, panels=True)
        out_val[j] = val
        out_err[j] = err
        out_jac[j, :] = _jac_row(j, snr, weights, a, b)
        ok = ok and good
    return ok
