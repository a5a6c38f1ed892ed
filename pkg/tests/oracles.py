"""Brute-force reference implementations used only by the tests.

Nothing here imports attncap.metrics; every count is done the slow way.
"""

import itertools
import math

import numpy as np


def grams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def naive_bleu(pairs, max_n):
    """pairs: list of (candidate, [references])."""
    num = [0] * max_n
    den = [0] * max_n
    c = r = 0
    for cand, refs in pairs:
        c += len(cand)
        best = None
        for ref in refs:
            key = (abs(len(ref) - len(cand)), len(ref))
            if best is None or key < best:
                best = key
        r += best[1]
        for n in range(1, max_n + 1):
            cg = grams(cand, n)
            for g in set(cg):
                clip = max(grams(ref, n).count(g) for ref in refs)
                num[n - 1] += min(cg.count(g), clip)
            den[n - 1] += len(cg)
    if min(num) == 0:
        return 0.0
    bp = 1.0 if c > r else (math.exp(1 - r / c) if c else 0.0)
    prod = 1.0
    for a, b in zip(num, den):
        prod *= a / b
    return bp * prod ** (1.0 / max_n)


def enum_lcs(a, b):
    """Longest common subsequence by trying every subsequence of the shorter input."""
    if len(a) > len(b):
        a, b = b, a
    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            sub = [a[i] for i in idx]
            it = iter(b)
            if all(tok in it for tok in sub):
                return k
    return 0


def naive_rouge_l(cand, refs, beta=1.2):
    scores = [0.0]
    for ref in refs:
        lcs = enum_lcs(cand, ref)
        if lcs == 0 or not cand:
            continue
        p, rec = lcs / len(cand), lcs / len(ref)
        scores.append((1 + beta**2) * p * rec / (rec + beta**2 * p))
    return max(scores)


def naive_cider(pairs, n_max=4, sigma=6.0):
    """Explicit dense TF-IDF vectors over the full n-gram inventory."""
    total = 0.0
    n_img = len(pairs)
    for cand, refs in pairs:
        acc = 0.0
        for n in range(1, n_max + 1):
            inventory = sorted({g for c, rs in pairs for s in [c, *rs] for g in grams(s, n)})
            col = {g: i for i, g in enumerate(inventory)}
            idf = np.zeros(len(inventory))
            for g, i in col.items():
                df = sum(1 for _, rs in pairs if any(g in grams(s, n) for s in rs))
                idf[i] = math.log(n_img / max(df, 1))

            def vec(tokens):
                v = np.zeros(len(inventory))
                for g in grams(tokens, n):
                    v[col[g]] += 1
                return v * idf

            cv = vec(cand)
            for ref in refs:
                rv = vec(ref)
                denom = np.linalg.norm(cv) * np.linalg.norm(rv)
                sim = float(cv @ rv) / denom if denom > 0 else 0.0
                acc += math.exp(-((len(cand) - len(ref)) ** 2) / (2 * sigma**2)) * sim
        total += 10.0 * acc / n_max / len(refs)
    return total / n_img


def enum_alignment(cand, ref):
    """(matches, chunks) by enumerating every one-to-one exact alignment."""
    options = [[None] + [j for j, w in enumerate(ref) if w == tok] for tok in cand]
    best = (0, 0)
    for choice in itertools.product(*options):
        used = [j for j in choice if j is not None]
        if len(used) != len(set(used)):
            continue
        m = len(used)
        chunks = 0
        prev = None
        for j in choice:
            if j is not None and (prev is None or j != prev + 1):
                chunks += 1
            prev = j
        if (m, -chunks) > (best[0], -best[1]):
            best = (m, chunks)
    return best


def naive_meteor(cand, refs, alpha=0.9, beta=3.0, gamma=0.5):
    best = 0.0
    for ref in refs:
        m, ch = enum_alignment(cand, ref)
        if m == 0:
            continue
        p, r = m / len(cand), m / len(ref)
        f = p * r / (alpha * p + (1 - alpha) * r)
        best = max(best, f * (1 - gamma * (ch / m) ** beta))
    return best
