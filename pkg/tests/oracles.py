"""Independent reference implementations used as test oracles.

Everything here stays deliberately naive: explicit loops, closed forms from
polar coordinates, and scalar interpolation, so that agreement with the
library is evidence and not tautology.
"""

from __future__ import annotations

import math

import numpy as np


def brute_conjugate_1d(xs, vals, slopes):
    """Exhaustive sup_i (x_i * y - f_i), smallest index winning ties."""
    out = np.empty(len(slopes))
    arg = np.empty(len(slopes), dtype=np.int64)
    for k, y in enumerate(slopes):
        best = -np.inf
        bi = -1
        for i, (x, v) in enumerate(zip(xs, vals)):
            if not np.isfinite(v):
                continue
            c = x * y - v
            if c > best:
                best, bi = c, i
        out[k] = best
        arg[k] = bi
    return out, arg


def brute_conjugate_nd(axes, vals, dual_axes):
    """Double loop over dual and primal nodes.

    The candidate accumulates axis terms in ascending axis order starting
    from -f, the association the separable sweep produces, so exact float
    comparison is meaningful.
    """
    dual_shape = tuple(len(ax) for ax in dual_axes)
    out = np.full(dual_shape, -np.inf)
    for jm in np.ndindex(*dual_shape):
        y = [dual_axes[d][jm[d]] for d in range(len(dual_axes))]
        best = -np.inf
        for im in np.ndindex(*vals.shape):
            v = vals[im]
            if not np.isfinite(v):
                continue
            acc = -v
            for d in range(len(axes)):
                acc = axes[d][im[d]] * y[d] + acc
            if acc > best:
                best = acc
        out[jm] = best
    return out


def naive_infconv(fv, gv):
    """Scalar triple loop min-plus convolution."""
    out_shape = tuple(a + b - 1 for a, b in zip(fv.shape, gv.shape))
    out = np.full(out_shape, np.inf)
    for km in np.ndindex(*out_shape):
        best = np.inf
        for jm in np.ndindex(*fv.shape):
            im = tuple(k - j for k, j in zip(km, jm))
            if any(i < 0 or i >= m for i, m in zip(im, gv.shape)):
                continue
            c = fv[jm] + gv[im]
            if c < best:
                best = c
        out[km] = best
    return out


def bilinear_scalar(axes, vals, point, snap=1e-9):
    """Scalar conservative multilinear interpolation matching the library's
    convention: any +inf corner with positive weight poisons the cell."""
    dim = len(axes)
    base = []
    frac = []
    for d in range(dim):
        lo = axes[d][0]
        step = axes[d][1] - axes[d][0] if len(axes[d]) > 1 else 1.0
        t = (point[d] - lo) / step
        if t < -snap or t > len(axes[d]) - 1 + snap:
            return np.inf
        i = int(np.clip(np.floor(t), 0, len(axes[d]) - 2))
        f = min(max(t - i, 0.0), 1.0)
        if f < snap:
            f = 0.0
        if f > 1 - snap:
            f = 1.0
        base.append(i)
        frac.append(f)
    total = 0.0
    for corner in np.ndindex(*(2,) * dim):
        w = 1.0
        for d, c in enumerate(corner):
            w *= frac[d] if c else 1.0 - frac[d]
        if w == 0.0:
            continue
        v = vals[tuple(b + c for b, c in zip(base, corner))]
        if not np.isfinite(v):
            return np.inf
        total += w * v
    return total


def naive_hopflax(g_axes, g_vals, w_axes, w_vals, h, out_axes):
    """Scalar loops over output nodes and cost nodes with scalar interp."""
    out_shape = tuple(len(ax) for ax in out_axes)
    out = np.full(out_shape, np.inf)
    w_shape = w_vals.shape
    for km in np.ndindex(*out_shape):
        x = np.array([out_axes[d][km[d]] for d in range(len(out_axes))])
        best = np.inf
        for jm in np.ndindex(*w_shape):
            wv = w_vals[jm]
            if not np.isfinite(wv):
                continue
            y = np.array([w_axes[d][jm[d]] for d in range(len(w_axes))])
            gv = bilinear_scalar(g_axes, g_vals, x - h * y)
            c = gv + h * wv
            if c < best:
                best = c
        out[km] = best
    return out


def polar_cone_moment(alpha: float, phi_of_dir, n_theta: int = 400001) -> float:
    """I_alpha over a 2D cone epigraph via its polar reduction.

    The boundary z2 = phi(z1) + 1 in shifted coordinates gives
    r(theta) = 1/(sin(theta) - phi(cos(theta))) on the arc where the
    denominator is positive, hence
    I_alpha = (alpha-2)^(-1) * int (sin(theta) - phi(cos(theta)))^(alpha-2).
    """
    theta = np.linspace(0.0, np.pi, n_theta)
    s = np.sin(theta) - phi_of_dir(np.cos(theta))
    s = np.where(s > 0, s, 0.0)
    return float(np.trapezoid(s ** (alpha - 2.0), theta) / (alpha - 2.0))


def halfplane_moment(alpha: float) -> float:
    """I_alpha over the half-plane: (alpha-2)^(-1) * int_0^pi sin^(alpha-2)."""
    m = alpha - 2.0
    integral = math.sqrt(math.pi) * math.gamma((m + 1.0) / 2.0) / math.gamma(m / 2.0 + 1.0)
    return integral / m


def halfspace3_moment(alpha: float) -> float:
    """I_alpha over the 3D half-space: 2 pi / ((alpha-3)(alpha-2))."""
    return 2.0 * math.pi / ((alpha - 3.0) * (alpha - 2.0))


def richardson_limit(hs, vals):
    """Iterated first-order Richardson extrapolation along decreasing hs."""
    level = list(map(float, vals))
    xs = list(map(float, hs))
    while len(level) > 1:
        nxt = []
        for k in range(len(level) - 1):
            h0, h1 = xs[k], xs[k + 1]
            nxt.append((h0 * level[k + 1] - h1 * level[k]) / (h0 - h1))
        level = nxt
        xs = xs[1:]
    return level[0]
