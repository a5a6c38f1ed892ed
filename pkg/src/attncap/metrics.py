"""Caption similarity metrics: BLEU-1..4, ROUGE-L, CIDEr and exact-match METEOR.

All functions take already-normalized token lists.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence

from .errors import ContractError

Tokens = Sequence[str]


@dataclass(frozen=True)
class EvalInstance:
    candidate: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __init__(self, candidate: Tokens, references: Sequence[Tokens]):
        if not references:
            raise ContractError("an evaluation instance needs at least one reference")
        object.__setattr__(self, "candidate", tuple(candidate))
        object.__setattr__(self, "references", tuple(tuple(r) for r in references))


@dataclass(frozen=True)
class ScoreReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    cider: float
    meteor_exact: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _require_corpus(corpus) -> None:
    if not corpus:
        raise ContractError("metric needs a nonempty corpus")


def _closest_ref_len(cand_len: int, refs: Sequence[Tokens]) -> int:
    return min((abs(len(r) - cand_len), len(r)) for r in refs)[1]


def bleu_stats(corpus: Sequence[EvalInstance], max_n: int = 4):
    """Aggregate (clipped matches, candidate n-grams) per order, plus c and r."""
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for inst in corpus:
        cand_len += len(inst.candidate)
        ref_len += _closest_ref_len(len(inst.candidate), inst.references)
        for n in range(1, max_n + 1):
            counts = ngrams(inst.candidate, n)
            max_ref = Counter()
            for ref in inst.references:
                max_ref |= ngrams(ref, n)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += sum(counts.values())
    return matches, totals, cand_len, ref_len


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def bleu(corpus: Sequence[EvalInstance], max_n: int = 4) -> float:
    """Corpus BLEU-N: brevity penalty times the geometric mean of clipped precisions."""
    _require_corpus(corpus)
    if max_n not in (1, 2, 3, 4):
        raise ContractError(f"BLEU order must be 1..4, got {max_n}")
    matches, totals, c, r = bleu_stats(corpus, max_n)
    if any(m == 0 for m in matches):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    return brevity_penalty(c, r) * math.exp(log_p)


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(inst: EvalInstance, beta: float = 1.2) -> float:
    """LCS F-measure against the best-matching reference."""
    if beta <= 0:
        raise ContractError(f"beta must be positive, got {beta}")
    if not inst.candidate:
        return 0.0
    best = 0.0
    for ref in inst.references:
        lcs = lcs_length(inst.candidate, ref)
        if lcs == 0:
            continue
        prec = lcs / len(inst.candidate)
        rec = lcs / len(ref)
        best = max(best, (1 + beta**2) * prec * rec / (rec + beta**2 * prec))
    return best


def corpus_rouge_l(corpus: Sequence[EvalInstance], beta: float = 1.2) -> float:
    _require_corpus(corpus)
    return math.fsum(rouge_l(inst, beta) for inst in corpus) / len(corpus)


def cider(corpus: Sequence[EvalInstance], n_max: int = 4, sigma: float = 6.0) -> float:
    """Mean over instances of the TF-IDF n-gram cosine score (x10).

    IDF is computed over the reference sets of this corpus. The per-reference
    cosine is damped by exp(-(len diff)^2 / (2 sigma^2)).
    """
    _require_corpus(corpus)
    n_images = len(corpus)
    df = Counter()
    for inst in corpus:
        seen = set()
        for ref in inst.references:
            for n in range(1, n_max + 1):
                seen.update(ngrams(ref, n))
        df.update(seen)
    log_n = math.log(n_images)

    def vectors(tokens):
        out = []
        for n in range(1, n_max + 1):
            vec = {g: c * (log_n - math.log(max(1, df[g]))) for g, c in ngrams(tokens, n).items()}
            out.append((vec, math.sqrt(sum(v * v for v in vec.values()))))
        return out

    scores = []
    for inst in corpus:
        cand = vectors(inst.candidate)
        per_n = [0.0] * n_max
        for ref in inst.references:
            delta = len(inst.candidate) - len(ref)
            penalty = math.exp(-(delta**2) / (2 * sigma**2))
            for n, ((cv, cnorm), (rv, rnorm)) in enumerate(zip(cand, vectors(ref))):
                if cnorm == 0 or rnorm == 0:
                    continue
                dot = sum(w * rv.get(g, 0.0) for g, w in cv.items())
                per_n[n] += penalty * dot / (cnorm * rnorm)
        scores.append(10.0 * sum(per_n) / n_max / len(inst.references))
    return math.fsum(scores) / n_images


def _meteor_alignment(cand: Tokens, ref: Tokens) -> tuple[int, int]:
    """(matches, chunks) of the exact-match alignment with most matches, then fewest chunks."""
    cand, ref = tuple(cand), tuple(ref)
    positions = {w: tuple(j for j, r in enumerate(ref) if r == w) for w in set(cand)}

    @lru_cache(maxsize=None)
    def best(i: int, used: frozenset, prev: int) -> tuple[int, int]:
        # prev: reference position matched by cand[i-1], or -2 if unmatched
        if i == len(cand):
            return 0, 0
        m, neg_chunks = best(i + 1, used, -2)
        result = (m, neg_chunks)
        for j in positions[cand[i]]:
            if j in used:
                continue
            m, neg_chunks = best(i + 1, used | {j}, j)
            new_chunk = 0 if j == prev + 1 else 1
            result = max(result, (m + 1, neg_chunks - new_chunk))
        return result

    m, neg_chunks = best(0, frozenset(), -2)
    return m, -neg_chunks


def meteor_exact(
    inst: EvalInstance, alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5
) -> float:
    """METEOR restricted to exact unigram matches; best score over references."""
    best = 0.0
    for ref in inst.references:
        if not inst.candidate or not ref:
            continue
        matches, chunks = _meteor_alignment(inst.candidate, ref)
        if matches == 0:
            continue
        prec = matches / len(inst.candidate)
        rec = matches / len(ref)
        f_mean = prec * rec / (alpha * prec + (1 - alpha) * rec)
        penalty = gamma * (chunks / matches) ** beta
        best = max(best, f_mean * (1 - penalty))
    return best


def corpus_meteor_exact(corpus: Sequence[EvalInstance]) -> float:
    _require_corpus(corpus)
    return math.fsum(meteor_exact(inst) for inst in corpus) / len(corpus)


def score_corpus(corpus: Sequence[EvalInstance]) -> ScoreReport:
    _require_corpus(corpus)
    return ScoreReport(
        bleu1=bleu(corpus, 1),
        bleu2=bleu(corpus, 2),
        bleu3=bleu(corpus, 3),
        bleu4=bleu(corpus, 4),
        rouge_l=corpus_rouge_l(corpus),
        cider=cider(corpus),
        meteor_exact=corpus_meteor_exact(corpus),
    )
