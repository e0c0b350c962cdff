"""Reference implementations written independently of the package fast paths.

They favour obviousness over speed: explicit loops, textbook formulas and
brute-force searches.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# vision


def detect_piles_bruteforce(img, dark_thresh=64, bright_val=255, min_dark=1):
    """Per-column scan with explicit run counting; returns (groups, chosen)."""
    h, w = len(img), len(img[0])
    qualifies = []
    for j in range(w):
        dark = 0
        runs = 0
        inside = False
        for i in range(h):
            v = int(img[i][j])
            if v < dark_thresh:
                dark += 1
            if v == bright_val:
                if not inside:
                    runs += 1
                inside = True
            else:
                inside = False
        qualifies.append(dark >= min_dark and runs >= 2)
    groups = []
    j = 0
    while j < w:
        if qualifies[j]:
            k = j
            while k + 1 < w and qualifies[k + 1]:
                k += 1
            groups.append((j, k))
            j = k + 1
        else:
            j += 1
    chosen = None
    for g in groups:
        if chosen is None or (g[1] - g[0]) > (chosen[1] - chosen[0]):
            chosen = g
    return groups, chosen


# ---------------------------------------------------------------------------
# statistics


def t_pdf(x, df):
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(logc) * (1 + x * x / df) ** (-(df + 1) / 2)


def t_two_sided_p(t, df, n=200_000):
    """2 * P(T > |t|) by composite Simpson integration of the density over [0, |t|]."""
    a = abs(t)
    if a == 0:
        return 1.0
    n += n % 2
    h = a / n
    s = t_pdf(0.0, df) + t_pdf(a, df)
    for k in range(1, n):
        s += (4 if k % 2 else 2) * t_pdf(k * h, df)
    central = s * h / 3.0        # P(0 < T < |t|)
    return 1.0 - 2.0 * central


def welch_oracle(xs, ys):
    nx, ny = len(xs), len(ys)
    mx, my = sum(xs) / nx, sum(ys) / ny
    vx = sum((x - mx) ** 2 for x in xs) / (nx - 1)
    vy = sum((y - my) ** 2 for y in ys) / (ny - 1)
    se2 = vx / nx + vy / ny
    t = (mx - my) / math.sqrt(se2)
    df = se2 ** 2 / ((vx / nx) ** 2 / (nx - 1) + (vy / ny) ** 2 / (ny - 1))
    return t, df, t_two_sided_p(t, df)


# ---------------------------------------------------------------------------
# calibration


def law(eps, c, a0, a1, b0, b1, p):
    return (a0 + a1 * c) * eps + (b0 + b1 * c) * eps ** p


def grid_search_fit(targets, p_grid, coef_boxes, refine=4):
    """Coarse-to-fine exhaustive search over (a0, a1, b0, b1) at each p.

    ``coef_boxes`` gives (lo, hi) per linear coefficient; each refinement
    shrinks the box around the incumbent.  Returns (best_sse, params).
    """
    eps = np.array([t.strain for t in targets])
    c = np.array([t.compression for t in targets])
    y = np.array([t.mean for t in targets])
    w = 1.0 / np.array([t.std for t in targets])
    best = (math.inf, None)
    for p in p_grid:
        boxes = [list(b) for b in coef_boxes]
        for _ in range(refine):
            axes = [np.linspace(lo, hi, 11) for lo, hi in boxes]
            A0, A1, B0, B1 = np.meshgrid(*axes, indexing="ij")
            pred = ((A0[..., None] + A1[..., None] * c) * eps
                    + (B0[..., None] + B1[..., None] * c) * eps ** p)
            sse = (((pred - y) * w) ** 2).sum(axis=-1)
            k = np.unravel_index(np.argmin(sse), sse.shape)
            cur = [A0[k], A1[k], B0[k], B1[k]]
            if sse[k] < best[0]:
                best = (float(sse[k]), (*map(float, cur), float(p)))
            boxes = [[max(0.0, v - (hi - lo) / 5), v + (hi - lo) / 5] for v, (lo, hi) in zip(cur, boxes)]
    return best


# ---------------------------------------------------------------------------
# geometry


def cone_height_oracle(mass, repose_deg=35.0, phi=0.1, rho=7850.0):
    """Solve V = pi r^2 h / 3 with h = r tan(a) by bisection on h."""
    vol = mass / (phi * rho)
    tan_a = math.tan(math.radians(repose_deg))
    lo, hi = 0.0, 10.0
    for _ in range(200):
        h = 0.5 * (lo + hi)
        r = h / tan_a
        if math.pi * r * r * h / 3.0 < vol:
            lo = h
        else:
            hi = h
    h = 0.5 * (lo + hi)
    return h, h / tan_a


def ray_march_range(pose, length, width, piles, limit, threshold, cone, ds=1e-4):
    """Step along the heading until a wall or a cone surface above ``threshold`` is hit."""
    x, y, th = pose
    ux, uy = math.cos(th), math.sin(th)
    s = 0.0
    while s < limit:
        px, py = x + s * ux, y + s * uy
        if px <= 0 or px >= length or py <= 0 or py >= width:
            return s
        for p in piles:
            h, r = cone(p)
            if h > threshold:
                d = math.hypot(px - p.x, py - p.y)
                if d < r and h * (1 - d / r) > threshold:
                    return s
        s += ds
    return limit


def heading_sweep_argmax(read, n=360):
    vals = [read(math.radians(k * 360.0 / n)) for k in range(n)]
    k = max(range(n), key=lambda i: vals[i])
    return math.radians(k * 360.0 / n), vals
