# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: the per-user throughput integrals and the slot scheduler.

Both routines mirror ``_kernels_py`` step for step; the pure-Python module is the
reference and the fallback when this extension is not built.
"""
from libc.math cimport exp, expm1, log1p, fabs
from libc.stdlib cimport malloc, free

cdef double LN2 = 0.6931471805599453

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
XGK[:] = [0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
          0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
          0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
          0.207784955007898467600689403773245, 0.0]
WGK[:] = [0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
          0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
          0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
          0.204432940075298892414161999234649, 0.209482141084727828012999174891714]
WG[:] = [0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
         0.381830050505118944950369775488975, 0.417959183673469387755102040816327]


cdef inline double _integrand(double x, Py_ssize_t k, Py_ssize_t K,
                              const double* snr, const double* weights) noexcept nogil:
    # x = log(1 + S_k g) is the rate in nats; the density of x is
    # exp(x - expm1(x)/S_k)/S_k and rival j loses while expm1(c x) < S_j g_j
    cdef double val = x / LN2 * exp(x - expm1(x) / snr[k]) / snr[k]
    cdef double t, c
    cdef Py_ssize_t j
    for j in range(K):
        if j == k:
            continue
        c = weights[k] / weights[j]
        t = expm1(c * x) / snr[j]
        val *= -expm1(-t)
        if val == 0.0:
            break
    return val


cdef inline void _gk15(double a, double b, Py_ssize_t k, Py_ssize_t K,
                       const double* snr, const double* weights,
                       double* res, double* err) noexcept nogil:
    cdef double centr = 0.5 * (a + b)
    cdef double hlgth = 0.5 * (b - a)
    cdef double fc = _integrand(centr, k, K, snr, weights)
    cdef double resk = fc * WGK[7]
    cdef double resg = fc * WG[3]
    cdef double f1, f2, dx
    cdef int j
    for j in range(7):
        dx = hlgth * XGK[j]
        f1 = _integrand(centr - dx, k, K, snr, weights)
        f2 = _integrand(centr + dx, k, K, snr, weights)
        resk += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += WG[j // 2] * (f1 + f2)
    res[0] = resk * hlgth
    err[0] = fabs((resk - resg) * hlgth)


cdef inline void _jac_point(double x, double wt, Py_ssize_t k, Py_ssize_t K,
                            const double* snr, const double* weights,
                            double* pre, double* suf, double* fac, double* dfac,
                            double* acc) noexcept nogil:
    cdef double base = x / LN2 * exp(x - expm1(x) / snr[k]) / snr[k]
    cdef double c, t, g, others
    cdef Py_ssize_t j
    for j in range(K):
        if j == k:
            fac[j] = 1.0
            dfac[j] = 0.0
            continue
        c = weights[k] / weights[j]
        t = expm1(c * x) / snr[j]
        fac[j] = -expm1(-t)
        # derivative of the factor with respect to log(c)
        dfac[j] = exp(-t + c * x) * c * x / snr[j]
    pre[0] = 1.0
    for j in range(K):
        pre[j + 1] = pre[j] * fac[j]
    suf[K] = 1.0
    for j in range(K - 1, -1, -1):
        suf[j] = suf[j + 1] * fac[j]
    for j in range(K):
        if j == k:
            continue
        g = wt * base * pre[j] * suf[j + 1] * dfac[j]
        # c_kj = w_k / w_j
        acc[j] -= g
        acc[k] += g


cdef void _jac_panel(double a, double b, Py_ssize_t k, Py_ssize_t K,
                     const double* snr, const double* weights,
                     double* pre, double* suf, double* fac, double* dfac,
                     double* acc) noexcept nogil:
    """Add the GK15 estimate of dPhi_k/dlog(w_j) over [a, b] into acc[j]."""
    cdef double centr = 0.5 * (a + b)
    cdef double hlgth = 0.5 * (b - a)
    cdef int q
    cdef double x, wq
    for q in range(15):
        if q < 7:
            x = centr - hlgth * XGK[q]
            wq = WGK[q]
        elif q == 7:
            x = centr
            wq = WGK[7]
        else:
            x = centr + hlgth * XGK[14 - q]
            wq = WGK[14 - q]
        _jac_point(x, wq * hlgth, k, K, snr, weights, pre, suf, fac, dfac, acc)


cdef int _integrate_one(Py_ssize_t k, Py_ssize_t K, const double* snr,
                        const double* weights, double tail_gain, int n_init,
                        double tol, int max_panels, double* out_val,
                        double* out_err, double* jac_row) noexcept nogil:
    """Round-based adaptive Gauss-Kronrod; returns panel count or -1 on overflow."""
    cdef double* a = <double*> malloc(max_panels * sizeof(double))
    cdef double* b = <double*> malloc(max_panels * sizeof(double))
    cdef double* v = <double*> malloc(max_panels * sizeof(double))
    cdef double* e = <double*> malloc(max_panels * sizeof(double))
    cdef double* a2 = <double*> malloc(max_panels * sizeof(double))
    cdef double* b2 = <double*> malloc(max_panels * sizeof(double))
    cdef double* v2 = <double*> malloc(max_panels * sizeof(double))
    cdef double* e2 = <double*> malloc(max_panels * sizeof(double))
    cdef Py_ssize_t n = n_init
    cdef Py_ssize_t i, m
    cdef double total, err, thresh, mid
    cdef double upper = log1p(snr[k] * tail_gain)
    cdef int status = 0
    cdef double* tmp
    for i in range(n):
        a[i] = upper * i / n
        b[i] = upper * (i + 1) / n
        _gk15(a[i], b[i], k, K, snr, weights, &v[i], &e[i])
    while True:
        total = 0.0
        err = 0.0
        for i in range(n):
            total += v[i]
            err += e[i]
        if err <= tol:
            break
        thresh = tol / n
        m = 0
        for i in range(n):
            if e[i] > thresh:
                m += 2
            else:
                m += 1
        if m > max_panels:
            status = -1
            break
        m = 0
        for i in range(n):
            if e[i] > thresh:
                mid = 0.5 * (a[i] + b[i])
                a2[m] = a[i]
                b2[m] = mid
                _gk15(a2[m], b2[m], k, K, snr, weights, &v2[m], &e2[m])
                a2[m + 1] = mid
                b2[m + 1] = b[i]
                _gk15(a2[m + 1], b2[m + 1], k, K, snr, weights, &v2[m + 1], &e2[m + 1])
                m += 2
            else:
                a2[m] = a[i]
                b2[m] = b[i]
                v2[m] = v[i]
                e2[m] = e[i]
                m += 1
        tmp = a; a = a2; a2 = tmp
        tmp = b; b = b2; b2 = tmp
        tmp = v; v = v2; v2 = tmp
        tmp = e; e = e2; e2 = tmp
        n = m
    out_val[0] = total
    out_err[0] = err
    cdef double* pre
    cdef double* suf
    cdef double* fac
    cdef double* dfac
    if jac_row != NULL:
        pre = <double*> malloc((K + 1) * sizeof(double))
        suf = <double*> malloc((K + 1) * sizeof(double))
        fac = <double*> malloc(K * sizeof(double))
        dfac = <double*> malloc(K * sizeof(double))
        for i in range(K):
            jac_row[i] = 0.0
        for i in range(n):
            _jac_panel(a[i], b[i], k, K, snr, weights, pre, suf, fac, dfac, jac_row)
        free(pre); free(suf); free(fac); free(dfac)
    free(a); free(b); free(v); free(e)
    free(a2); free(b2); free(v2); free(e2)
    if status < 0:
        return -1
    return <int> n


def phi_integrals(const double[::1] snr, const double[::1] weights,
                  double tail_gain, int n_init, double tol, int max_panels,
                  double[::1] out_val, double[::1] out_err, long k=-1):
    """Fill ``out_val``/``out_err`` with the unit-bandwidth throughput integrals.

    User k's integral runs over its rate up to the quantile of fading gain
    ``tail_gain``, starting from ``n_init`` equal panels. ``k < 0`` evaluates
    every user; otherwise only entry ``k`` is written. Returns False if any
    integral hit the panel limit.
    """
    cdef Py_ssize_t K = snr.shape[0]
    cdef Py_ssize_t j, lo, hi
    cdef int rc
    cdef bint ok = True
    if k >= 0:
        lo = k
        hi = k + 1
    else:
        lo = 0
        hi = K
    with nogil:
        for j in range(lo, hi):
            rc = _integrate_one(j, K, &snr[0], &weights[0], tail_gain, n_init,
                                tol, max_panels, &out_val[j], &out_err[j], NULL)
            if rc < 0:
                ok = False
    return ok


def schedule_slots(const double[::1] weights, const double[::1] snr, double bandwidth,
                   const double[:, :, ::1] gains, int[:, ::1] winners,
                   double[::1] totals):
    """Weighted max-rate assignment for a block of slots.

    ``gains`` is (slots, users, subchannels). Each subchannel goes to the user
    with the largest ``weights[k] * rate``; equal scores keep the lowest index.
    Awarded rates are added into ``totals``.
    """
    cdef Py_ssize_t T = gains.shape[0]
    cdef Py_ssize_t K = gains.shape[1]
    cdef Py_ssize_t N = gains.shape[2]
    cdef Py_ssize_t t, i, kk, best
    cdef double score, best_score, rate, best_rate
    cdef double scale = bandwidth / LN2
    with nogil:
        for t in range(T):
            for i in range(N):
                best = 0
                best_rate = scale * log1p(snr[0] * gains[t, 0, i])
                best_score = weights[0] * best_rate
                for kk in range(1, K):
                    rate = scale * log1p(snr[kk] * gains[t, kk, i])
                    score = weights[kk] * rate
                    if score > best_score:
                        best_score = score
                        best_rate = rate
                        best = kk
                winners[t, i] = <int> best
                totals[best] += best_rate


def phi_jacobian(const double[::1] snr, const double[::1] weights,
                 double tail_gain, int n_init, double tol, int max_panels,
                 double[::1] out_val, double[::1] out_err, double[:, ::1] out_jac):
    """As ``phi_integrals`` for every user, also filling ``out_jac[k, j]`` with
    dPhi_k / dlog(weights[j]), integrated on the panels that resolved Phi_k."""
    cdef Py_ssize_t K = snr.shape[0]
    cdef Py_ssize_t j
    cdef int rc
    cdef bint ok = True
    with nogil:
        for j in range(K):
            rc = _integrate_one(j, K, &snr[0], &weights[0], tail_gain, n_init,
                                tol, max_panels, &out_val[j], &out_err[j], &out_jac[j, 0])
            if rc < 0:
                ok = False
    return ok
