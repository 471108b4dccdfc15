"""Independent reference implementations used as test oracles.

Everything here is deliberately written straight-line (explicit loops,
two-pass statistics, f64 or mpmath arithmetic) and shares no code with the
engine paths it checks.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def softmax_highprec(row) -> list[float]:
    """Sum-normalized exp at 50 significant digits."""
    with mpmath.workdps(50):
        exps = [mpmath.e ** mpmath.mpf(float(v)) for v in row]
        total = mpmath.fsum(exps)
        return [float(e / total) for e in exps]


def gelu_highprec(x: float) -> float:
    with mpmath.workdps(50):
        v = mpmath.mpf(float(x))
        return float(0.5 * v * (1 + mpmath.erf(v / mpmath.sqrt(2))))


def layer_norm_two_pass(row, gamma, beta, eps: float) -> list[float]:
    n = len(row)
    mean = sum(float(v) for v in row) / n
    var = sum((float(v) - mean) ** 2 for v in row) / n
    scale = math.sqrt(var + eps)
    return [(float(v) - mean) / scale * float(g) + float(b) for v, g, b in zip(row, gamma, beta)]


def auroc_all_pairs(scores, labels) -> float:
    """Brute-force mean over all (positive, negative) pairs with half credit
    for ties."""
    pos = [float(s) for s, y in zip(scores, labels) if y == 1]
    neg = [float(s) for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def unigram_segmentations(text: str, pieces: dict[str, float]):
    """All complete segmentations of text into vocabulary pieces, as
    (score, piece_count, piece_tuple) entries."""
    results = []

    def go(i: int, acc: list[str], score: float):
        if i == len(text):
            results.append((score, len(acc), tuple(acc)))
            return
        for piece, logprob in pieces.items():
            if text.startswith(piece, i):
                go(i + len(piece), acc + [piece], score + logprob)

    go(0, [], 0.0)
    return results


def best_unigram_segmentation(text: str, pieces: dict[str, float]):
    """Highest score, then fewest pieces, then lexicographically smallest
    piece sequence. None when no complete segmentation exists."""
    options = unigram_segmentations(text, pieces)
    if not options:
        return None
    return min(options, key=lambda e: (-e[0], e[1], e[2]))


def encoder_forward_reference(params, cfg, ids, mask) -> np.ndarray:
    """Straight-line f64 post-norm encoder forward (no batching)."""
    P = {k: t.data.astype(np.float64) for k, t in params.entries.items()}
    seq = len(ids)
    d = cfg.hidden
    x = np.zeros((seq, d))
    for t, tok in enumerate(ids):
        x[t] = P["embed.word"][tok] + P["embed.pos"][cfg.position_offset + t] + P["embed.type"][0]

    def ln(v, gamma, beta):
        out = np.zeros_like(v)
        for r in range(v.shape[0]):
            row = layer_norm_two_pass(v[r], gamma, beta, cfg.layer_norm_eps)
            out[r] = row
        return out

    x = ln(x, P["embed.ln.gamma"], P["embed.ln.beta"])
    heads, dh = cfg.heads, d // cfg.heads
    for i in range(cfg.layers):
        pfx = f"layer.{i}"
        q = x @ P[f"{pfx}.attn.q.w"] + P[f"{pfx}.attn.q.b"]
        k = x @ P[f"{pfx}.attn.k.w"] + P[f"{pfx}.attn.k.b"]
        v = x @ P[f"{pfx}.attn.v.w"] + P[f"{pfx}.attn.v.b"]
        ctx = np.zeros((seq, d))
        for h in range(heads):
            sl = slice(h * dh, (h + 1) * dh)
            for t in range(seq):
                scores = []
                for u in range(seq):
                    s = float(np.dot(q[t, sl], k[u, sl])) / math.sqrt(dh)
                    if mask[u] == 0:
                        s -= 1e9
                    scores.append(s)
                top = max(scores)
                exps = [math.exp(s - top) for s in scores]
                denom = sum(exps)
                for u in range(seq):
                    ctx[t, sl] += (exps[u] / denom) * v[u, sl]
        attn = ctx @ P[f"{pfx}.attn.o.w"] + P[f"{pfx}.attn.o.b"]
        x = ln(x + attn, P[f"{pfx}.attn.ln.gamma"], P[f"{pfx}.attn.ln.beta"])
        h1 = x @ P[f"{pfx}.ffn.w1"] + P[f"{pfx}.ffn.b1"]
        h1 = np.vectorize(lambda z: 0.5 * z * (1 + math.erf(z / math.sqrt(2))))(h1)
        h2 = h1 @ P[f"{pfx}.ffn.w2"] + P[f"{pfx}.ffn.b2"]
        x = ln(x + h2, P[f"{pfx}.ffn.ln.gamma"], P[f"{pfx}.ffn.ln.beta"])
    return x


def fuse_reference(head, ha, hb):
    """Scalar-loop gated fusion for a single pair of pooled vectors."""
    d_f, d_a = head.w_a.shape
    d_b = head.w_b.shape[1]
    u = [float(v) for v in ha] + [float(v) for v in hb]
    fused = []
    gate = []
    for i in range(d_f):
        pre = float(head.b_g[i])
        for j in range(d_a + d_b):
            pre += float(head.w_g[i, j]) * u[j]
        g = 1.0 / (1.0 + math.exp(-pre))
        pa = float(head.b_a[i])
        for j in range(d_a):
            pa += float(head.w_a[i, j]) * float(ha[j])
        pb = float(head.b_b[i])
        for j in range(d_b):
            pb += float(head.w_b[i, j]) * float(hb[j])
        gate.append(g)
        fused.append(g * pa + (1 - g) * pb)
    return np.array(fused), np.array(gate)


def finite_difference_grads(loss_fn, params: dict[str, np.ndarray], step: float = 1e-4):
    """Central finite differences of loss_fn() w.r.t. every entry of every
    parameter array, mutating and restoring in place."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_fn()
            arr[idx] = orig - step
            down = loss_fn()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def max_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> float:
    worst = 0.0
    for name, a in analytic.items():
        b = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst
