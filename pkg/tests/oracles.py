"""Independent reference implementations used as test oracles.

Each oracle follows the mathematical definition directly, with plain loops
where practical, and shares no code with the package.
"""

from __future__ import annotations

import itertools

import numpy as np


def soft_threshold_loop(X, zeta):
    X = np.asarray(X, dtype=float)
    out = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        x = X[idx]
        mag = abs(x) - zeta
        if mag > 0:
            out[idx] = mag if x > 0 else -mag
    return out


def jacobi_singular_values(X, sweeps: int = 60, tol: float = 1e-15):
    """One-sided Jacobi SVD; returns singular values in descending order."""
    A = np.array(X, dtype=float)
    if A.shape[0] < A.shape[1]:
        A = A.T
    n = A.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = A[:, i] @ A[:, i]
                b = A[:, j] @ A[:, j]
                c = A[:, i] @ A[:, j]
                if abs(c) <= tol * np.sqrt(a * b):
                    continue
                off = max(off, abs(c) / np.sqrt(a * b))
                zeta = (b - a) / (2 * c)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta * zeta)) if zeta != 0 else 1.0
                cs = 1 / np.sqrt(1 + t * t)
                sn = cs * t
                Ai = A[:, i].copy()
                A[:, i] = cs * Ai - sn * A[:, j]
                A[:, j] = sn * Ai + cs * A[:, j]
        if off < tol:
            break
    return np.sort(np.linalg.norm(A, axis=0))[::-1]


def homography_matrix(tau):
    a, b, c, d, e, f, g, h = tau
    return np.array([[1 + a, b, c], [d, 1 + e, f], [g, h, 1.0]])


def map_point(tau, p):
    v = homography_matrix(tau) @ np.array([p[0], p[1], 1.0])
    return v[:2] / v[2]


def numeric_coordinate_jacobian(tau, p, step=1e-6):
    J = np.zeros((2, 8))
    for k in range(8):
        e = np.zeros(8)
        e[k] = step
        J[:, k] = (map_point(np.asarray(tau) + e, p) - map_point(np.asarray(tau) - e, p)) / (2 * step)
    return J


def min_norm_ridge(J, r, ridge=1e-6):
    """Limit of the ridge-regularized normal equations as the ridge goes to zero.

    Richardson extrapolation of two ridge solutions removes the first-order bias.
    """
    J = np.asarray(J, dtype=float)
    G, b = J.T @ J, J.T @ r

    def solve(lam):
        return np.linalg.solve(G + lam * np.eye(G.shape[0]), b)

    return 2 * solve(ridge) - solve(2 * ridge)


def regions_oracle(masks):
    """Greedy peeling computed per pixel: group by covering set, then claim by subset order."""
    M = [np.asarray(m, dtype=bool).ravel() for m in masks]
    npx = M[0].size
    cover = {}
    for p in range(npx):
        s = tuple(i for i in range(len(M)) if M[i][p])
        if len(s) >= 2:
            cover[p] = s
    taken = set()
    out = []
    while len(taken) < len(cover):
        remaining = {cover[p] for p in cover if p not in taken}
        best = sorted(remaining, key=lambda s: (-len(s), s))[0]
        claim = [p for p in sorted(cover) if p not in taken and all(M[i][p] for i in best)]
        taken.update(claim)
        out.append((best, claim))
    return out


def min_marginals_bruteforce(unary, alpha):
    """Exact min-marginals of a 4-connected grid MRF with pairwise alpha (l - l')^2."""
    H, W, K = unary.shape
    nodes = [(i, j) for i in range(H) for j in range(W)]
    edges = [((i, j), (i, j + 1)) for i in range(H) for j in range(W - 1)]
    edges += [((i, j), (i + 1, j)) for i in range(H - 1) for j in range(W)]
    best = np.full((H, W, K), np.inf)
    for labels in itertools.product(range(K), repeat=len(nodes)):
        lab = dict(zip(nodes, labels))
        e = sum(unary[n][lab[n]] for n in nodes)
        e += sum(alpha * (lab[a] - lab[b]) ** 2 for a, b in edges)
        for n in nodes:
            if e < best[n][lab[n]]:
                best[n][lab[n]] = e
    return best


def min_marginals_chain(unary, alpha):
    """Exact min-marginals on a chain by forward/backward dynamic programming."""
    n, K = unary.shape
    lab = np.arange(K)
    P = alpha * (lab[:, None] - lab[None, :]) ** 2
    fwd = np.zeros((n, K))
    bwd = np.zeros((n, K))
    for t in range(1, n):
        fwd[t] = np.min(fwd[t - 1][:, None] + unary[t - 1][:, None] + P, axis=0)
    for t in range(n - 2, -1, -1):
        bwd[t] = np.min(bwd[t + 1][None, :] + unary[t + 1][None, :] + P, axis=1)
    return fwd + unary + bwd


def truncated_l2_loop(a, b, mask, t):
    tot, m = 0.0, 0
    for idx in zip(*np.nonzero(mask)):
        diff = float(np.sum((np.atleast_1d(a[idx]) - np.atleast_1d(b[idx])) ** 2))
        tot += min(diff, t * t)
        m += 1
    return np.sqrt(tot / m)


def transform_distance_loop(t1, t2, h, w):
    tot = 0.0
    for y in range(h):
        for x in range(w):
            d = map_point(t1, (x, y)) - map_point(t2, (x, y))
            tot += d @ d
    return tot / (h * w)


def descriptor_loop(image, y, x):
    """Orientation histogram descriptor at one pixel by direct accumulation."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape

    def px(r, c):
        # reflect padding without repeating the edge
        r = -r if r < 0 else (2 * (h - 1) - r if r > h - 1 else r)
        c = -c if c < 0 else (2 * (w - 1) - c if c > w - 1 else c)
        return img[r, c]

    hist = np.zeros((4, 4, 8))
    for dy in range(-8, 8):
        for dx in range(-8, 8):
            r, c = y + dy, x + dx
            gx = (px(r, c + 1) - px(r, c - 1)) / 2
            gy = (px(r + 1, c) - px(r - 1, c)) / 2
            mag = np.hypot(gx, gy)
            ang = np.arctan2(gy, gx) % (2 * np.pi)
            b = int(np.floor(ang / (np.pi / 4))) % 8
            hist[(dy + 8) // 4, (dx + 8) // 4, b] += mag
    v = hist.ravel()
    n = np.linalg.norm(v)
    if n <= 1e-12:
        return np.zeros(128)
    v = np.minimum(v / n, 0.2)
    return v / np.linalg.norm(v)


def assumption_constants_loop(u, v, sigma, S, J, dtau):
    m, n = S.shape
    d = J.shape[2]
    Q, R = [], []
    for i in range(n):
        q, r = np.linalg.qr(J[i])
        sgn = np.sign(np.diag(r))
        sgn[sgn == 0] = 1
        Q.append(q * sgn)
        R.append(r * sgn[:, None])
    mu = max(np.sqrt(m) * max(abs(x) for x in u), np.sqrt(n) * max(abs(x) for x in v))
    nu = 0.0
    for j in range(n):
        for i in range(m):
            nu = max(nu, np.linalg.norm(Q[j][i, :]) * np.sqrt(m / d))
    kappa = max(np.linalg.norm(Q[i].T @ u) for i in range(n)) * np.sqrt(m / d)
    delta = 0.0
    for i in range(n):
        acc = sum(np.linalg.norm(Q[j].T @ Q[i], 2) for j in range(n) if j != i) / (n - 1)
        delta = max(delta, acc)
    gamma = max(np.linalg.norm(R[i] @ dtau[:, i]) for i in range(n)) * np.sqrt(n * d) / sigma
    a1 = max(np.count_nonzero(S[:, j]) / m for j in range(n))
    a2 = max(np.count_nonzero(S[i, :]) / n for i in range(m))
    return dict(mu=mu, nu=nu, kappa=kappa, delta=delta, gamma=gamma, alpha1=a1, alpha2=a2)


def l1_fit_direct(objective, x0):
    """High-precision minimizer of a low-dimensional nonsmooth objective.

    Alternates Powell's derivative-free search with restarts until the value
    stops improving; independent of any Gauss-Newton reweighting.
    """
    from scipy.optimize import minimize

    x = np.array(x0, dtype=float)
    f = objective(x)
    for _ in range(20):
        res = minimize(objective, x, method="Powell", options={"xtol": 1e-10, "ftol": 1e-14, "maxfev": 40000})
        if res.fun >= f - 1e-12 * max(abs(f), 1.0):
            if res.fun < f:
                x, f = res.x, res.fun
            break
        x, f = res.x, res.fun
    return x
