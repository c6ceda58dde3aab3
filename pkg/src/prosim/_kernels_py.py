"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled module; only speed differs.
"""

import numpy as np
from scipy.special import ndtr, ndtri

NEGLIGIBLE_MASS = 1e-15
MIN_DIST = 1e-3


def neighbor_mask(x, y, radius):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    mask = dx * dx + dy * dy <= radius * radius
    np.fill_diagonal(mask, False)
    return mask


def listener_sinr(tx_x, tx_y, l_x, l_y, alpha, noise):
    tx_x = np.asarray(tx_x, dtype=float)
    tx_y = np.asarray(tx_y, dtype=float)
    l_x = np.asarray(l_x, dtype=float)
    l_y = np.asarray(l_y, dtype=float)
    d = np.hypot(tx_x[:, None] - l_x[None, :], tx_y[:, None] - l_y[None, :])
    power = np.maximum(d, MIN_DIST) ** -alpha
    ntx = len(tx_x)
    # sum over j != k, accumulated in index order like the compiled loop
    others = np.zeros_like(power)
    for j in range(ntx):
        contrib = power[j]
        mask = np.ones(ntx, dtype=bool)
        mask[j] = False
        others[mask] += contrib
    return power / (noise + others)


def _draw(mu, sd, lo, g, eps):
    if sd <= 0.0:
        return np.full(g.shape, max(mu, eps))
    if lo < NEGLIGIBLE_MASS:
        x = mu + sd * g
        return np.where(x > eps, x, eps)
    return mu + sd * ndtri(lo + ndtr(g) * (1.0 - lo))


def mc_sinr_count(mu0, sd0, lo0, mus, sds, los, g0, present, gi, alpha, beta, noise, eps):
    present = np.asarray(present, dtype=bool)
    g = np.zeros(present.shape)
    g[present] = gi
    z = np.full(present.shape[0], float(noise))
    for i in range(len(mus)):
        x = _draw(mus[i], sds[i], los[i], g[:, i], eps)
        z += np.where(present[:, i], x ** -alpha, 0.0)
    x0 = _draw(mu0, sd0, lo0, np.asarray(g0, dtype=float), eps)
    return int(np.count_nonzero(x0 ** -alpha >= beta * z))


def mac_select(order, x, y, radius):
    r2 = radius * radius
    winners = []
    for i in order:
        if all((x[i] - x[j]) ** 2 + (y[i] - y[j]) ** 2 > r2 for j in winners):
            winners.append(int(i))
    return np.asarray(winners, dtype=np.int64)


def link_probabilities(px, py, vx, vy, sig, rx, ry, rvx, rvy, rsig, dt, radius):
    dx = np.asarray(px, dtype=float) - rx
    dy = np.asarray(py, dtype=float) - ry
    dvx = np.asarray(vx, dtype=float) - rvx
    dvy = np.asarray(vy, dtype=float) - rvy
    d = np.hypot(dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.where(d > 0.0, (dvx * dx + dvy * dy) / np.where(d > 0, d, 1.0),
                          np.hypot(dvx, dvy))
    mean = radial * dt
    sig = np.asarray(sig, dtype=float)
    var = (sig * sig + rsig * rsig) * dt ** 3
    margin = radius - d - mean
    with np.errstate(invalid="ignore", divide="ignore"):
        prob = ndtr(margin / np.sqrt(var))
    return np.where(var > 0.0, prob, (margin > 0.0).astype(float))


def _inclusion_pattern(w, samples, rng):
    """Bernoulli(w[i]) per sample and interferer, drawn by geometric skipping."""
    present = np.zeros((samples, len(w)), dtype=bool)
    for col, wc in enumerate(w):
        if wc >= 1.0:
            present[:, col] = True
        elif wc > 0.0:
            lw = np.log1p(-wc)
            s = -1
            while True:
                s += 1 + int(np.floor(np.log1p(-rng.random()) / lw))
                if s >= samples:
                    break
                present[s, col] = True
    return present


def forecast_links(sender, cands, px, py, vx, vy, sig, dts, radius, p_cut, activity, samples,
                   alpha, beta, noise, eps, rng):
    k = len(cands)
    p_link = np.zeros(k)
    p_sinr = np.zeros(k)
    n_bar = np.zeros(k)
    idx = np.arange(len(px))
    for j, c in enumerate(cands):
        dt = float(dts[j])
        dx = px - px[c]
        dy = py - py[c]
        wx = vx - vx[c]
        wy = vy - vy[c]
        d = np.hypot(dx, dy)
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(d > 0, (wx * dx + wy * dy) / np.where(d > 0, d, 1.0),
                              np.hypot(wx, wy))
        var = (sig ** 2 + sig[c] ** 2) * dt ** 3
        margin = radius - d - radial * dt
        with np.errstate(invalid="ignore", divide="ignore"):
            prob = np.where(var > 0, ndtr(margin / np.sqrt(var)), (margin > 0).astype(float))
        prob[c] = 0.0
        n_bar[j] = prob.sum()
        p_link[j] = prob[sender]
        mu = d + radial * dt
        sd = np.sqrt(var)
        keep = (prob >= p_cut) & (idx != sender) & (idx != c)
        mus, sds = mu[keep], sd[keep]
        with np.errstate(invalid="ignore", divide="ignore"):
            los = np.where(sds > 0, ndtr((eps - mus) / np.where(sds > 0, sds, 1.0)), 0.0)
        w = np.minimum(1.0, activity * prob[keep])
        present = _inclusion_pattern(w, samples, rng)
        g0 = rng.standard_normal(samples)
        gi = rng.standard_normal(int(present.sum()))
        mu0, sd0 = mu[sender], sd[sender]
        lo0 = float(ndtr((eps - mu0) / sd0)) if sd0 > 0 else 0.0
        count = mc_sinr_count(mu0, sd0, lo0, mus, sds, los, g0, present, gi, alpha, beta,
                              noise, eps)
        p_sinr[j] = count / samples
    return p_link, p_sinr, n_bar
