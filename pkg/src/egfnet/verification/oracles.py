"""Straight-line reference implementations using plain Python loops and lists.

Nothing here touches numpy or the tensor engine while computing; arrays are
converted to nested lists at the boundary with :func:`to_list`. Maps are
indexed ``x[n][c][i][j]``.
"""

from __future__ import annotations

import math


def to_list(a):
    """Nested Python lists from a tensor, ndarray or list."""
    data = getattr(a, "data", a)
    return data.tolist() if hasattr(data, "tolist") else data


def shape4(x):
    return len(x), len(x[0]), len(x[0][0]), len(x[0][0][0])


def zeros4(n, c, h, w):
    return [[[[0.0] * w for _ in range(h)] for _ in range(c)] for _ in range(n)]


def conv2d(x, weight, bias=None, stride=1, padding=0, dilation=1):
    n, cin, h, w = shape4(x)
    cout, _, k, _ = shape4(weight)
    ho = (h + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    wo = (w + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out = zeros4(n, cout, ho, wo)
    for b in range(n):
        for o in range(cout):
            wo_ = weight[o]
            base = bias[o] if bias is not None else 0.0
            for i in range(ho):
                for j in range(wo):
                    acc = base
                    for c in range(cin):
                        xc = x[b][c]
                        wc = wo_[c]
                        for di in range(k):
                            r = i * stride + di * dilation - padding
                            if r < 0 or r >= h:
                                continue
                            row = xc[r]
                            wrow = wc[di]
                            for dj in range(k):
                                s = j * stride + dj * dilation - padding
                                if 0 <= s < w:
                                    acc += wrow[dj] * row[s]
                    out[b][o][i][j] = acc
    return out


def batchnorm_train(x, scale, shift, eps=1e-5):
    n, c, h, w = shape4(x)
    out = zeros4(n, c, h, w)
    m = n * h * w
    for ch in range(c):
        total = 0.0
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    total += x[b][ch][i][j]
        mean = total / m
        sq = 0.0
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    d = x[b][ch][i][j] - mean
                    sq += d * d
        var = sq / m
        inv = 1.0 / math.sqrt(var + eps)
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    out[b][ch][i][j] = scale[ch] * (x[b][ch][i][j] - mean) * inv + shift[ch]
    return out


def batchnorm_eval(x, scale, shift, mean, var, eps=1e-5):
    n, c, h, w = shape4(x)
    out = zeros4(n, c, h, w)
    for b in range(n):
        for ch in range(c):
            inv = 1.0 / math.sqrt(var[ch] + eps)
            for i in range(h):
                for j in range(w):
                    out[b][ch][i][j] = scale[ch] * (x[b][ch][i][j] - mean[ch]) * inv + shift[ch]
    return out


def _sample_1d(coord, size):
    src = min(max(coord, 0.0), size - 1.0)
    i0 = int(math.floor(src))
    i1 = min(i0 + 1, size - 1)
    return i0, i1, src - i0


def upsample(x, factor):
    n, c, h, w = shape4(x)
    out = zeros4(n, c, h * factor, w * factor)
    for i in range(h * factor):
        r0, r1, fr = _sample_1d((i + 0.5) / factor - 0.5, h)
        for j in range(w * factor):
            c0, c1, fc = _sample_1d((j + 0.5) / factor - 0.5, w)
            for b in range(n):
                for ch in range(c):
                    p = x[b][ch]
                    out[b][ch][i][j] = ((1 - fr) * ((1 - fc) * p[r0][c0] + fc * p[r0][c1])
                                        + fr * ((1 - fc) * p[r1][c0] + fc * p[r1][c1]))
    return out


def elementwise(a, b, op):
    n, c, h, w = shape4(a)
    bc = len(b[0])
    out = zeros4(n, c, h, w)
    for k in range(n):
        for ch in range(c):
            src = b[k][ch if bc > 1 else 0]
            for i in range(h):
                for j in range(w):
                    out[k][ch][i][j] = op(a[k][ch][i][j], src[i][j])
    return out


def add(a, b):
    return elementwise(a, b, lambda u, v: u + v)


def mul(a, b):
    return elementwise(a, b, lambda u, v: u * v)


def relu(x):
    return [[[[v if v > 0 else 0.0 for v in row] for row in plane] for plane in img] for img in x]


def concat(parts):
    n = len(parts[0])
    return [[plane for p in parts for plane in p[k]] for k in range(n)]


def ones_like(x):
    n, c, h, w = shape4(x)
    return [[[[1.0] * w for _ in range(h)] for _ in range(c)] for _ in range(n)]


# ------------------------------------------------------------ layers


def conv_layer(x, params, prefix):
    """Apply the convolution stored under ``prefix`` in a flat {name: nested list, ...} dict."""
    meta = params[prefix + "meta"]
    bias = params.get(prefix + "bias")
    return conv2d(x, params[prefix + "weight"], bias, meta["stride"], meta["padding"], meta["dilation"])


def bn_layer(x, params, prefix):
    return batchnorm_train(x, params[prefix + "scale"], params[prefix + "shift"], params[prefix + "meta"]["eps"])


def cbr_layer(x, params, prefix):
    return relu(bn_layer(conv_layer(x, params, prefix + "conv/"), params, prefix + "bn/"))


def module_params(module):
    """Flatten a module into nested lists plus per-layer metadata for the oracles."""
    from ..nn_ops import BatchNorm2d, Conv2d

    flat = {name: t.data.tolist() for name, t in module.named_tensors()}
    for path, mod in module.named_modules():
        if isinstance(mod, Conv2d):
            flat[path + "meta"] = {"stride": mod.stride, "padding": mod.padding, "dilation": mod.dilation}
        elif isinstance(mod, BatchNorm2d):
            flat[path + "meta"] = {"eps": mod.eps}
    return flat


# ------------------------------------------------------ network blocks


def mfm(r, t, p, level):
    rt = add(r, t)
    fm = conv_layer(concat([mul(rt, r), mul(rt, t)]), p, "fuse/")
    inner = bn_layer(conv_layer(cbr_layer(fm, p, "refine/"), p, "refine_conv/"), p, "refine_bn/")
    fm_hat = relu(add(fm, inner))
    branches = [conv_layer(fm_hat, p, f"dil{rate}/") for rate in (1, 2, 3, 4)]
    f = conv_layer(concat([fm_hat] + branches), p, "merge/")
    side = cbr_layer(f, p, "head/")
    return (f, side, None) if level <= 3 else (f, None, side)


def gim(f5, p):
    parts = [conv_layer(f5, p, "a0/")] + [conv_layer(f5, p, f"a{r}/") for r in (1, 2, 3, 4)]
    fa = conv_layer(concat(parts), p, "fuse/")
    return upsample(cbr_layer(add(f5, fa), p, "cbr/"), 2)


def sim(f_high, f4, p, residual_fs2=False):
    fs1 = conv_layer(concat([f_high, f4]), p, "fuse/")
    fs2 = add(mul(fs1, f_high), mul(fs1, f4))
    inner = bn_layer(conv_layer(cbr_layer(fs2, p, "cbr/"), p, "conv/"), p, "bn/")
    inner = add(fs2 if residual_fs2 else f_high, inner)
    return upsample(conv_layer(inner, p, "out/"), 2)


def sfm_step(f_high, fc, f, i):
    high = upsample(f_high, 2 ** (4 - i))
    return upsample(add(add(high, fc), f), 2)


def sgm(s4, s5, p):
    up4 = upsample(s4, 16)
    up5 = upsample(s5, 32)
    sem1 = conv_layer(concat([up4, up5]), p, "fuse/")
    sem2 = add(add(sem1, up4), up5)
    sem = conv_layer(mul(cbr_layer(sem2, p, "cbr/"), up5), p, "classify/")
    return sem1, sem2, sem


def embed_boundary(b, edge, i, head_params):
    return mul(upsample(conv_layer(b, head_params, ""), 2 ** i), edge)


def embed_semantic(x, edge):
    return add(mul(x, edge), x)


# -------------------------------------------------------- edge prior


SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
SOBEL_Y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]


def sobel(img):
    """img: [N][H][W] lists; returns the L1 magnitude with zeroed border."""
    out = []
    for plane in img:
        h, w = len(plane), len(plane[0])
        res = [[0.0] * w for _ in range(h)]
        for i in range(1, h - 1):
            for j in range(1, w - 1):
                gx = gy = 0.0
                for di in range(3):
                    for dj in range(3):
                        v = plane[i + di - 1][j + dj - 1]
                        gx += SOBEL_X[di][dj] * v
                        gy += SOBEL_Y[di][dj] * v
                res[i][j] = abs(gx) + abs(gy)
        out.append(res)
    return out


def minmax(plane):
    flat = [v for row in plane for v in row]
    lo, hi = min(flat), max(flat)
    if hi <= lo:
        return [[0.0] * len(row) for row in plane]
    return [[(v - lo) / (hi - lo) for v in row] for row in plane]


def boundary(labels, radius):
    """labels: [N][H][W] ints. Brute-force 4-neighbour transitions then square dilation."""
    out = []
    for lab in labels:
        h, w = len(lab), len(lab[0])
        edge = [[0] * w for _ in range(h)]
        for i in range(h):
            for j in range(w):
                for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    a, b = i + di, j + dj
                    if 0 <= a < h and 0 <= b < w and lab[a][b] != lab[i][j]:
                        edge[i][j] = 1
        res = [[0] * w for _ in range(h)]
        for i in range(h):
            for j in range(w):
                hit = 0
                for a in range(max(0, i - radius), min(h, i + radius + 1)):
                    for b in range(max(0, j - radius), min(w, j + radius + 1)):
                        if edge[a][b]:
                            hit = 1
                res[i][j] = hit
        out.append(res)
    return out


# ------------------------------------------------------------ losses


def bce(logits, target, w_neg, w_pos):
    """logits/target: flat lists of equal length."""
    total = 0.0
    for z, t in zip(logits, target):
        p = 1.0 / (1.0 + math.exp(-z))
        wt = w_pos if t == 1 else w_neg
        total += wt * (t * math.log(p) + (1 - t) * math.log(1 - p))
    return -total / len(logits)


def ce(logits, labels, weights, ignore_index=None):
    """logits: list over pixels of per-class score lists; labels: list of ints."""
    total, count = 0.0, 0
    for scores, lab in zip(logits, labels):
        if ignore_index is not None and lab == ignore_index:
            continue
        mx = max(scores)
        denom = sum(math.exp(s - mx) for s in scores)
        logp = scores[lab] - mx - math.log(denom)
        total += weights[lab] * logp
        count += 1
    return -total / count if count else 0.0


def adam_trace(w0, grad_fn, steps, lr, wd=0.0, b1=0.9, b2=0.999, eps=1e-8):
    w, m, v = w0, 0.0, 0.0
    trace = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        w = w * (1 - lr * wd) - lr * mhat / (math.sqrt(vhat) + eps)
        trace.append(w)
    return trace


# ----------------------------------------------------------- metrics


def metrics(pred, gt, num_classes):
    """Per-class recall and IoU by direct pixel counting (None when undefined)."""
    acc, iou = [], []
    for c in range(num_classes):
        tp = sum(1 for p, g in zip(pred, gt) if p == c and g == c)
        in_gt = sum(1 for g in gt if g == c)
        in_pred = sum(1 for p in pred if p == c)
        union = in_gt + in_pred - tp
        acc.append(tp / in_gt if in_gt else None)
        iou.append(tp / union if union else None)

    def mean(vals):
        present = [v for v in vals if v is not None]
        return sum(present) / len(present) if present else None

    return acc, iou, mean(acc), mean(iou)
