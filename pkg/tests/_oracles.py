"""Independent reference implementations used as test oracles.

Everything here is written loop-by-loop from the definitions, deliberately
not sharing code with the package, so agreement is evidence rather than
tautology.
"""

import math

import numpy as np

from hiersphere import HierLabel, Polarity


def ref_pair_target(a: HierLabel, b: HierLabel, neutral_pair_positive: bool = False) -> float:
    if a.class_id != b.class_id:
        return 0.0
    an = a.polarity is Polarity.NEUTRAL
    bn = b.polarity is Polarity.NEUTRAL
    if an and bn:
        return 1.0 if neutral_pair_positive else 0.0
    if an or bn:
        return 0.0
    return 1.0 if a.polarity is b.polarity else -1.0


def ref_cosine(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(u @ v / (math.sqrt(float(u @ u)) * math.sqrt(float(v @ v))))


def ref_pairwise_loss(emb, labels, t, neutral_pair_positive: bool = False) -> float:
    """Plain double loop over unordered pairs."""
    emb = np.asarray(emb, dtype=float)
    b = emb.shape[0]
    total = 0.0
    for i in range(b):
        for j in range(i + 1, b):
            y = ref_pair_target(labels[i], labels[j], neutral_pair_positive)
            c = ref_cosine(emb[i], emb[j])
            if y == 0.0 and abs(c) < t:
                continue
            total += (c - y) ** 2
    return total / (b * (b - 1) / 2)


def ref_triplet_mean(emb, labels, margin) -> tuple[float, int]:
    """Mean hinge over all (anchor, positive, negative) index triples."""
    emb = np.asarray(emb, dtype=float)
    sub = [lb.subclass_index for lb in labels]
    b = emb.shape[0]
    total, count = 0.0, 0
    for a in range(b):
        for p in range(b):
            if p == a or sub[p] != sub[a]:
                continue
            for n in range(b):
                if sub[n] == sub[a]:
                    continue
                dp = float(np.linalg.norm(emb[a] - emb[p]))
                dn = float(np.linalg.norm(emb[a] - emb[n]))
                total += max(0.0, dp - dn + margin)
                count += 1
    return (total / count if count else 0.0), count


def ref_tfidf_vectors(texts) -> np.ndarray:
    """tf-idf rows with idf = ln((1+N)/(1+df)) + 1, L2-normalized."""
    import re

    token_split = re.compile(r"[^0-9a-z]+")
    docs = [[tok for tok in token_split.split(text.lower()) if tok] for text in texts]
    vocab = sorted({tok for doc in docs for tok in doc})
    col = {tok: k for k, tok in enumerate(vocab)}
    n = len(docs)
    df = np.zeros(len(vocab))
    for doc in docs:
        for tok in set(doc):
            df[col[tok]] += 1
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    mat = np.zeros((n, len(vocab)))
    for i, doc in enumerate(docs):
        for tok in doc:
            mat[i, col[tok]] += 1.0
    mat *= idf
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return mat / norms


def random_labels(rng, n, num_classes=3):
    pols = list(Polarity)
    return [
        HierLabel(int(rng.integers(0, num_classes)), pols[int(rng.integers(0, 3))])
        for _ in range(n)
    ]
