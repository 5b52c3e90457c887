import math

import numpy as np

from svbrdf_uq.material import MapStack
from svbrdf_uq.renderer import RenderSet


def random_directions(rng, n, min_z=0.2):
    """Random upper-hemisphere unit vectors with ``z >= min_z``."""
    z = rng.uniform(min_z, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    r = np.sqrt(1.0 - z ** 2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def random_stack(rng, height=16, width=16, ppi=200.0, min_rough=0.2):
    normals = random_directions(rng, height * width, min_z=0.5).reshape(
        height, width, 3
    )
    spec = rng.uniform(0.0, 1.0, size=(height, width))
    rough = rng.uniform(min_rough, 1.0, size=(height, width))
    return MapStack.from_arrays(normals, spec, rough, ppi=ppi)


def random_render_set(rng, n=8):
    return RenderSet(random_directions(rng, n), random_directions(rng, n))


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def ggx_reference(n, spec, rough, l, v):
    """Scalar GGX lobe, written out term by term."""
    nl, nv = _dot(n, l), _dot(n, v)
    if nl <= 0.0 or nv <= 0.0:
        return 0.0

    hx, hy, hz = l[0] + v[0], l[1] + v[1], l[2] + v[2]
    hn = math.sqrt(hx * hx + hy * hy + hz * hz)
    h = (hx / hn, hy / hn, hz / hn)
    nh, vh = _dot(n, h), _dot(v, h)

    alpha = max(rough * rough, 1e-3)
    a2 = alpha * alpha
    d = a2 / (math.pi * (nh * nh * (a2 - 1.0) + 1.0) ** 2)

    def smith_lambda(c):
        tan2 = (1.0 - c * c) / (c * c)
        return (math.sqrt(1.0 + a2 * tan2) - 1.0) / 2.0

    g = 1.0 / (1.0 + smith_lambda(nl) + smith_lambda(nv))

    f0 = 0.08 * spec
    f = f0 + (1.0 - f0) * (1.0 - min(max(vh, 0.0), 1.0)) ** 5

    return d * f * g / (4.0 * nl * nv)


def shade_reference(stack, albedo, l, v):
    h, w = stack.shape
    c = albedo.shape[-1]
    res = np.empty((h, w, c))
    for r in range(h):
        for col in range(w):
            s = ggx_reference(
                stack.normals.vectors[r, col],
                stack.spec()[r, col],
                stack.rough()[r, col],
                l,
                v,
            )
            for ch in range(c):
                res[r, col, ch] = albedo[r, col, ch] / math.pi + s
    return res


def brdf_distance_reference(gt, est, render_set, albedo):
    h, w = gt.shape
    res = np.zeros((h, w))
    for l, v in render_set.pairs():
        f_gt = shade_reference(gt, albedo, l, v)
        f_est = shade_reference(est, albedo, l, v)
        cos = l[2]
        for r in range(h):
            for c in range(w):
                sq = np.mean((f_gt[r, c] - f_est[r, c]) ** 2)
                res[r, c] += (cos * cos * sq) ** (1.0 / 3.0)
    res = np.sqrt(res / len(render_set))
    return res.mean(), res


def pstdev(values):
    m = sum(values) / len(values)
    return math.sqrt(sum((x - m) ** 2 for x in values) / len(values))


def per_map_std_reference(stacks):
    h, w = stacks[0].shape
    s_n = np.empty((h, w))
    s_s = np.empty((h, w))
    s_r = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            comp = [
                pstdev([m.normals.vectors[r, c, i] for m in stacks]) for i in range(3)
            ]
            s_n[r, c] = math.sqrt(sum(x * x for x in comp))
            s_s[r, c] = pstdev([m.spec()[r, c] for m in stacks])
            s_r[r, c] = pstdev([m.rough()[r, c] for m in stacks])
    return s_n, s_s, s_r


def sigma_brdf_reference(stacks, render_set, albedo, eps):
    h, w = stacks[0].shape
    c_count = albedo.shape[-1]
    res = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for l, v in render_set.pairs():
                cos = l[2]
                sigmas = []
                for ch in range(c_count):
                    renders = []
                    for m in stacks:
                        n = m.normals.vectors[r, c]
                        f = ggx_reference(n, m.spec()[r, c], m.rough()[r, c], l, v)
                        renders.append(cos * (albedo[r, c, ch] / math.pi + f))
                    sigmas.append(pstdev(renders))
                acc += (sum(sigmas) / c_count) ** (1.0 / 3.0)
            res[r, c] = math.log(max(math.sqrt(acc) / len(render_set), eps))
    return res.mean(), res


def box_filter_reference(plane, box):
    h, w = plane.shape
    half = box // 2
    res = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            total = 0.0
            for dr in range(-half, half + 1):
                for dc in range(-half, half + 1):
                    rr = min(max(r + dr, 0), h - 1)
                    cc = min(max(c + dc, 0), w - 1)
                    total += plane[rr, cc]
            res[r, c] = total / (box * box)
    return res


def homogeneity_reference(plane, box):
    f = box_filter_reference(plane, box)
    h, w = plane.shape
    diffs = []
    for dr, dc in ((-box, 0), (box, 0), (0, -box), (0, box)):
        vals = []
        for r in range(h):
            for c in range(w):
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < h and 0 <= c2 < w:
                    vals.append(abs(f[r2, c2] - f[r, c]))
        diffs.append(sum(vals) / len(vals))
    return sum(diffs) / 4.0


def mutual_information_reference(a, b, bins):
    a = np.clip(np.ravel(a), 0.0, 1.0)
    b = np.clip(np.ravel(b), 0.0, 1.0)
    n = len(a)
    joint = {}
    pa = [0] * bins
    pb = [0] * bins
    for x, y in zip(a, b):
        i = min(int(x * bins), bins - 1)
        j = min(int(y * bins), bins - 1)
        joint[(i, j)] = joint.get((i, j), 0) + 1
        pa[i] += 1
        pb[j] += 1
    mi = 0.0
    for (i, j), count in joint.items():
        p = count / n
        mi += p * math.log(p / ((pa[i] / n) * (pb[j] / n)))
    return max(mi, 0.0)
