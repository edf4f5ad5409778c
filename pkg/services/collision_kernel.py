import math

import numpy as np
from numba import njit

SQRT3 = math.sqrt(3.0)


@njit(cache=True)
def _diffusion(w, noise_code):
    if noise_code == 0:
        return 1.0 - w * w
    if noise_code == 1:
        return 1.0 - abs(w)
    return math.sqrt(max(1.0 - w * w, 0.0))


@njit(cache=True)
def collide(w, p, q, n_events, gamma, sigma, noise_code, resample_limit, seed):
    """
    Run `n_events` random binary collisions in place on the opinion array `w`.

    Each event draws an unordered pair i != j, then noise pairs
    eta = sigma * U[-sqrt3, sqrt3] until both tentative opinions stay in
    [-1, 1]; after `resample_limit` failures the event uses eta = 0.

    Returns (rejected noise draws, zero-noise fallbacks).
    """
    np.random.seed(seed)
    n = w.shape[0]
    half_width = sigma * SQRT3
    rejections = 0
    fallbacks = 0
    for _ in range(n_events):
        i = np.random.randint(0, n)
        j = np.random.randint(0, n - 1)
        if j >= i:
            j += 1
        wi = w[i]
        wj = w[j]
        drift_i = gamma * q[i] * p[j] * (wj - wi)
        drift_j = gamma * q[j] * p[i] * (wi - wj)
        new_i = wi + drift_i
        new_j = wj + drift_j
        if half_width > 0.0:
            kick_i = q[i] * _diffusion(wi, noise_code)
            kick_j = q[j] * _diffusion(wj, noise_code)
            accepted = False
            for _attempt in range(resample_limit):
                eta_i = half_width * (2.0 * np.random.random() - 1.0)
                eta_j = half_width * (2.0 * np.random.random() - 1.0)
                cand_i = wi + drift_i + eta_i * kick_i
                cand_j = wj + drift_j + eta_j * kick_j
                if abs(cand_i) <= 1.0 and abs(cand_j) <= 1.0:
                    new_i = cand_i
                    new_j = cand_j
                    accepted = True
                    break
                rejections += 1
            if not accepted:
                fallbacks += 1
        w[i] = new_i
        w[j] = new_j
    return rejections, fallbacks
