"""Slow, obviously-correct reference implementations used only by the tests.

None of these call into ``clsprune``.
"""

import math


def ranks_quadratic(x):
    """rank(u) = 1 + #{strictly greater} + #{equal, not u} / 2."""
    out = []
    for i, xi in enumerate(x):
        greater = sum(1 for xj in x if xj > xi)
        ties = sum(1 for j, xj in enumerate(x) if j != i and xj == xi)
        out.append(1 + greater + ties / 2)
    return out


def spearman_tie_corrected(a, b):
    """Spearman's rho from the tie-corrected sum-of-squared-rank-differences form.

    rho = (Sx + Sy - sum d^2) / (2 sqrt(Sx Sy)),  Sx = (n^3 - n)/12 - sum_t (t^3 - t)/12
    with t running over tie-group sizes.  Rank direction does not matter as
    long as both sides use the same one; ascending ranks are used here.
    """
    n = len(a)

    def asc_ranks(v):
        order = sorted(range(n), key=lambda i: v[i])
        r = [0.0] * n
        i = 0
        groups = []
        while i < n:
            j = i
            while j + 1 < n and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                r[order[k]] = (i + j) / 2 + 1
            groups.append(j - i + 1)
            i = j + 1
        return r, groups

    ra, ga = asc_ranks(a)
    rb, gb = asc_ranks(b)
    sx = (n**3 - n) / 12 - sum(t**3 - t for t in ga) / 12
    sy = (n**3 - n) / 12 - sum(t**3 - t for t in gb) / 12
    d2 = sum((p - q) ** 2 for p, q in zip(ra, rb))
    return (sx + sy - d2) / (2 * math.sqrt(sx * sy))


def top_u_by_sort(scores, u):
    """Sort (score desc, index asc) tuples and take the first u indices."""
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[:u])


def encoder_layer_loop(att, layer):
    """att[layer][head][token] -> per-token head mean."""
    heads = len(att[layer])
    n = len(att[layer][0])
    out = [0.0] * n
    for i in range(heads):
        for u in range(n):
            out[u] += float(att[layer][i][u])
    return [v / heads for v in out]


def decoder_layer_loop(att, layer):
    """att[layer][head][output][token] -> mean over heads and output tokens."""
    heads = len(att[layer])
    outs = len(att[layer][0])
    n = len(att[layer][0][0])
    acc = [0.0] * n
    for j in range(heads):
        for k in range(outs):
            for u in range(n):
                acc[u] += float(att[layer][j][k][u])
    return [v / (heads * outs) for v in acc]


def ensemble_loop(att, k, fn):
    """Per-token aggregate of head means over layers L-1-k .. L-2."""
    num_layers = len(att)
    per_layer = [encoder_layer_loop(att, m) for m in range(num_layers - 1 - k, num_layers - 1)]
    n = len(per_layer[0])
    out = []
    for u in range(n):
        col = [s[u] for s in per_layer]
        if fn == "avg":
            out.append(sum(col) / len(col))
        elif fn == "max":
            out.append(max(col))
        else:
            out.append(min(col))
    return out


def layer_flops_terms(n, d, m):
    projections = 4 * (2 * n * d * d)
    scores = 2 * n * n * d
    context = 2 * n * n * d
    ffn = 2 * (2 * n * d * m)
    return projections + scores + context + ffn


def prefill_flops_sum(d, m, layers, n_text, full, kept, p):
    total_full = 0
    total_comp = 0
    for layer in range(layers):
        total_full += layer_flops_terms(n_text + full, d, m)
        n = n_text + (full if layer < p else kept)
        total_comp += layer_flops_terms(n, d, m)
    return total_full, total_comp
