"""Independent reference implementations used only by the tests.

Written as plain loops over the textbook formulas, sharing no code with the
package.
"""

import math

import numpy as np


def lattice_centers(m):
    ax = [-1.0 + (2 * i + 1) / m for i in range(m)]
    return np.array([[x, y, z] for x in ax for y in ax for z in ax])


def gaussian_density(p, mu, sigma):
    """Multivariate normal density with covariance sigma^2 I, via det/inv."""
    cov = np.eye(3) * sigma**2
    d = np.asarray(p) - np.asarray(mu)
    norm = 1.0 / ((2 * math.pi) ** 1.5 * math.sqrt(np.linalg.det(cov)))
    return norm * math.exp(-0.5 * d @ np.linalg.inv(cov) @ d)


def soft_assignment(points, m):
    centers = lattice_centers(m)
    K = len(centers)
    w = 1.0 / K
    sigma = 1.0 / m
    gamma = np.zeros((len(points), K))
    for t, p in enumerate(points):
        u = [w * gaussian_density(p, mu, sigma) for mu in centers]
        total = sum(u)
        for k in range(K):
            gamma[t, k] = u[k] / total
    return gamma


def point_terms(points, m):
    centers = lattice_centers(m)
    K = len(centers)
    w = 1.0 / K
    sigma = 1.0 / m
    gamma = soft_assignment(points, m)
    out = np.zeros((len(points), K, 7))
    for t, p in enumerate(points):
        for k, mu in enumerate(centers):
            g = gamma[t, k]
            out[t, k, 0] = (g - w) / math.sqrt(w)
            for d in range(3):
                z = (p[d] - mu[d]) / sigma
                out[t, k, 1 + d] = g * z / math.sqrt(w)
                out[t, k, 4 + d] = g * (z * z - 1.0) / math.sqrt(2 * w)
    return out


def dmfv(points, m):
    """20 x m x m x m tensor by explicit loops: sum/T, max, min."""
    terms = point_terms(points, m)
    T, K, _ = terms.shape
    out = np.zeros((20, m, m, m))
    for k in range(K):
        i, rem = divmod(k, m * m)
        j, l = divmod(rem, m)
        for c in range(7):
            acc = 0.0
            hi = -math.inf
            for t in range(T):
                acc += terms[t, k, c]
                hi = max(hi, terms[t, k, c])
            out[c, i, j, l] = acc / T
            out[7 + c, i, j, l] = hi
        for c in range(1, 7):
            lo = math.inf
            for t in range(T):
                lo = min(lo, terms[t, k, c])
            out[13 + c, i, j, l] = lo
    return out


def ball_scan(points, center, r):
    return sorted(i for i, p in enumerate(points) if np.linalg.norm(p - center) <= r)
