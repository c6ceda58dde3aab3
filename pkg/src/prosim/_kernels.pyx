# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. ``prosim._kernels_py`` mirrors every function here."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, erfc, floor, log1p, M_SQRT1_2
from scipy.special.cython_special cimport ndtr, ndtri
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()

# below this truncated mass the plain Gaussian draw is used unchanged
cdef double NEGLIGIBLE_MASS = 1e-15
cdef double MIN_DIST = 1e-3


def neighbor_mask(const double[::1] x, const double[::1] y, double radius):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, r2 = radius * radius
    out = np.zeros((n, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] m = out
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx * dx + dy * dy <= r2:
                m[i, j] = 1
                m[j, i] = 1
    return out.view(np.bool_)


def listener_sinr(const double[::1] tx_x, const double[::1] tx_y,
                  const double[::1] l_x, const double[::1] l_y,
                  double alpha, double noise):
    cdef Py_ssize_t ntx = tx_x.shape[0]
    cdef Py_ssize_t nl = l_x.shape[0]
    cdef Py_ssize_t k, j, l
    cdef double dx, dy, d, others
    out = np.empty((ntx, nl), dtype=np.float64)
    cdef double[:, ::1] s = out
    power = np.empty(ntx, dtype=np.float64)
    cdef double[::1] p = power
    for l in range(nl):
        for k in range(ntx):
            dx = tx_x[k] - l_x[l]
            dy = tx_y[k] - l_y[l]
            d = sqrt(dx * dx + dy * dy)
            if d < MIN_DIST:
                d = MIN_DIST
            p[k] = pow(d, -alpha)
        for k in range(ntx):
            others = 0.0
            for j in range(ntx):
                if j != k:
                    others += p[j]
            s[k, l] = p[k] / (noise + others)
    return out


cdef inline double _inv_power(double x, double alpha) nogil:
    if alpha == 3.0:
        return 1.0 / (x * x * x)
    if alpha == 2.0:
        return 1.0 / (x * x)
    return pow(x, -alpha)


cdef inline double _draw(double mu, double sd, double lo, double g, double eps) nogil:
    cdef double x
    if sd <= 0.0:
        return mu if mu > eps else eps
    if lo < NEGLIGIBLE_MASS:
        x = mu + sd * g
        return x if x > eps else eps
    return mu + sd * ndtri(lo + ndtr(g) * (1.0 - lo))


def mc_sinr_count(double mu0, double sd0, double lo0,
                  const double[::1] mus, const double[::1] sds,
                  const double[::1] los, const double[::1] g0,
                  const cnp.uint8_t[:, ::1] present, const double[::1] gi,
                  double alpha, double beta, double noise, double eps):
    """Count samples whose SINR reaches ``beta``.

    ``g0`` holds the sender's standard normal per sample. ``present`` marks
    which interferers take part in each sample; ``gi`` supplies one standard
    normal per marked cell, consumed in row-major order.
    """
    cdef Py_ssize_t S = g0.shape[0]
    cdef Py_ssize_t m = mus.shape[0]
    cdef Py_ssize_t s, i, k = 0
    cdef long count = 0
    cdef double x, z
    for s in range(S):
        z = noise
        for i in range(m):
            if present[s, i]:
                x = _draw(mus[i], sds[i], los[i], gi[k], eps)
                k += 1
                z += pow(x, -alpha)
        x = _draw(mu0, sd0, lo0, g0[s], eps)
        if pow(x, -alpha) >= beta * z:
            count += 1
    return count


def mac_select(const cnp.int64_t[::1] order, const double[::1] x,
               const double[::1] y, double radius):
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t a, b, i, j, nwin = 0
    cdef double dx, dy, r2 = radius * radius
    cdef bint clear
    winners = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] w = winners
    for a in range(n):
        i = order[a]
        clear = True
        for b in range(nwin):
            j = w[b]
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx * dx + dy * dy <= r2:
                clear = False
                break
        if clear:
            w[nwin] = i
            nwin += 1
    return winners[:nwin]


def link_probabilities(const double[::1] px, const double[::1] py,
                       const double[::1] vx, const double[::1] vy,
                       const double[::1] sig,
                       double rx, double ry, double rvx, double rvy,
                       double rsig, double dt, double radius):
    """Probability each vehicle is within ``radius`` of the reference after ``dt``."""
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t i
    cdef double dx, dy, d, radial, mean, var, margin
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        dx = px[i] - rx
        dy = py[i] - ry
        d = sqrt(dx * dx + dy * dy)
        if d > 0.0:
            radial = ((vx[i] - rvx) * dx + (vy[i] - rvy) * dy) / d
        else:
            radial = sqrt((vx[i] - rvx) ** 2 + (vy[i] - rvy) ** 2)
        mean = radial * dt
        var = (sig[i] * sig[i] + rsig * rsig) * dt * dt * dt
        margin = radius - d - mean
        if var <= 0.0:
            o[i] = 1.0 if margin > 0.0 else 0.0
        else:
            o[i] = 0.5 * erfc(-margin / sqrt(var) * M_SQRT1_2)
    return out


def forecast_links(Py_ssize_t sender, const cnp.int64_t[::1] cands,
                   const double[::1] px, const double[::1] py,
                   const double[::1] vx, const double[::1] vy,
                   const double[::1] sig, const double[::1] dts,
                   double radius, double p_cut, double activity, Py_ssize_t samples,
                   double alpha, double beta, double noise, double eps, rng):
    """Link probability, sampled SINR probability and expected neighbour count per candidate.

    Random numbers are taken from ``rng`` in the same order as the numpy
    fallback. For each candidate, every interferer's inclusion pattern over
    the samples is drawn by geometric skipping (one uniform per included
    sample plus one), interferer by interferer; then one normal per sample
    for the sender, then one normal per included cell in row-major order.
    """
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t k = cands.shape[0]
    cdef Py_ssize_t j, i, s, m, c, col
    cdef double dt, dx, dy, d, radial, var, margin, prob, nbar, x, z, lw
    cdef double mu0 = 0.0, sd0 = 0.0, lo0 = 0.0
    cdef long count
    p_link = np.zeros(k)
    p_sinr = np.zeros(k)
    n_bar = np.zeros(k)
    cdef double[::1] pl = p_link
    cdef double[::1] ps = p_sinr
    cdef double[::1] nb = n_bar
    mu_buf = np.empty(n)
    sd_buf = np.empty(n)
    lo_buf = np.empty(n)
    w_buf = np.empty(n)
    cdef double[::1] mus = mu_buf
    cdef double[::1] sds = sd_buf
    cdef double[::1] los = lo_buf
    cdef double[::1] ws = w_buf
    present_buf = np.empty(samples * n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] present = present_buf
    g0_buf = np.empty(samples)
    cdef double[::1] g0 = g0_buf
    capsule = rng.bit_generator.capsule
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
    with rng.bit_generator.lock:
        for j in range(k):
            c = cands[j]
            dt = dts[j]
            nbar = 0.0
            m = 0
            for i in range(n):
                if i == c:
                    continue
                dx = px[i] - px[c]
                dy = py[i] - py[c]
                d = sqrt(dx * dx + dy * dy)
                if d > 0.0:
                    radial = ((vx[i] - vx[c]) * dx + (vy[i] - vy[c]) * dy) / d
                else:
                    radial = sqrt((vx[i] - vx[c]) ** 2 + (vy[i] - vy[c]) ** 2)
                var = (sig[i] * sig[i] + sig[c] * sig[c]) * dt * dt * dt
                margin = radius - d - radial * dt
                if var <= 0.0:
                    prob = 1.0 if margin > 0.0 else 0.0
                else:
                    prob = 0.5 * erfc(-margin / sqrt(var) * M_SQRT1_2)
                nbar += prob
                if i == sender:
                    pl[j] = prob
                    mu0 = d + radial * dt
                    sd0 = sqrt(var)
                    lo0 = ndtr((eps - mu0) / sd0) if sd0 > 0.0 else 0.0
                elif prob >= p_cut:
                    mus[m] = d + radial * dt
                    sds[m] = sqrt(var)
                    los[m] = ndtr((eps - mus[m]) / sds[m]) if sds[m] > 0.0 else 0.0
                    ws[m] = activity * prob if activity * prob < 1.0 else 1.0
                    m += 1
            nb[j] = nbar
            # inclusion pattern per interferer by geometric skipping over the samples
            for s in range(samples * m):
                present[s] = 0
            for col in range(m):
                if ws[col] >= 1.0:
                    for s in range(samples):
                        present[s * m + col] = 1
                elif ws[col] > 0.0:
                    lw = log1p(-ws[col])
                    s = -1
                    while True:
                        s += 1 + <Py_ssize_t> floor(log1p(-bg.next_double(bg.state)) / lw)
                        if s >= samples:
                            break
                        present[s * m + col] = 1
            count = 0
            for s in range(samples):
                g0[s] = random_standard_normal(bg)
            for s in range(samples):
                z = noise
                for col in range(m):
                    if present[s * m + col]:
                        x = _draw(mus[col], sds[col], los[col], random_standard_normal(bg), eps)
                        z += _inv_power(x, alpha)
                x = _draw(mu0, sd0, lo0, g0[s], eps)
                if _inv_power(x, alpha) >= beta * z:
                    count += 1
            ps[j] = count / <double> samples
    return p_link, p_sinr, n_bar
