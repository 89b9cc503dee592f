"""Independent brute-force reference implementations used by the tests.

Nothing here imports from supportkit: each oracle re-derives its quantity
from the definition with plain loops.
"""

from __future__ import annotations

import math
import re


def confusion_loop(scores, labels, tau):
    tp = tn = fp = fn = 0
    for s, y in zip(scores, labels):
        pred = 1 if s >= tau else 0
        if pred == 1 and y == 1:
            tp += 1
        elif pred == 0 and y == 0:
            tn += 1
        elif pred == 1:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


def auroc_pairwise(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def average_precision_cutpoints(scores, labels):
    """Enumerate every distinct score as a cut-point (predict positive if >= cut)."""
    n_pos = sum(labels)
    total = 0.0
    prev_recall = 0.0
    for cut in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= cut and y == 1)
        k = sum(1 for s in scores if s >= cut)
        recall = tp / n_pos
        total += (tp / k) * (recall - prev_recall)
        prev_recall = recall
    return total


def youden_scan(scores, labels):
    """Exhaustive scan over the declared candidate set; first maximum wins."""
    u = sorted(set(scores))
    cands = [math.nextafter(u[0], -math.inf)]
    cands += [(a + b) / 2.0 for a, b in zip(u, u[1:])]
    cands.append(math.nextafter(u[-1], math.inf))
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    best = None
    for c in cands:
        tp, tn, _, _ = confusion_loop(scores, labels, c)
        key = tp * n_neg + tn * n_pos
        if best is None or key > best[0]:
            best = (key, c, tp / n_pos + tn / n_neg - 1.0)
    return best[1], best[2]


def thresholded_by_hand(scores, labels, tau):
    tp, tn, fp, fn = confusion_loop(scores, labels, tau)
    prec = tp / (tp + fp) if tp + fp else 0.0
    sens = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    acc = (tp + tn) / (tp + tn + fp + fn)
    f1 = 2 * prec * sens / (prec + sens) if prec + sens else 0.0
    return {
        "precision": 100 * prec, "sensitivity": 100 * sens, "specificity": 100 * spec,
        "accuracy": 100 * acc, "balanced_accuracy": 100 * ((sens + spec) / 2), "f1": 100 * f1,
    }


ABBREV = {"e.g.", "i.e.", "vs.", "cf.", "dr.", "mr.", "mrs.", "ms.", "prof.", "fig.", "figs.",
          "approx.", "ca.", "al.", "st.", "inc.", "jr.", "sr.", "ref.", "resp.", "max.", "min."}


def segment_by_scan(text):
    """Character-scan segmenter following the written rules.

    Paragraphs are split on blank lines and rejoined; a boundary is . ! or ?
    (plus closing quotes/brackets) followed by whitespace and an uppercase
    letter or digit, unless the word ending in the period is an abbreviation.
    """
    out = []
    for para in re.split(r"\n[ \t]*\n", text):
        para = " ".join(para.split())
        if not para:
            continue
        start, i = 0, 0
        while i < len(para):
            ch = para[i]
            if ch in ".!?":
                j = i + 1
                while j < len(para) and para[j] in "\"')]":
                    j += 1
                k = j
                while k < len(para) and para[k].isspace():
                    k += 1
                boundary = k > j and k < len(para) and (para[k].isupper() or para[k].isdigit())
                if boundary and ch == ".":
                    ws = para.rfind(" ", 0, i) + 1
                    word = para[ws:i + 1].lower().lstrip("(\"'[")
                    if word in ABBREV:
                        boundary = False
                if boundary:
                    out.append(para[start:j].strip())
                    start = j
                    i = j
                    continue
            i += 1
        tail = para[start:].strip()
        if tail:
            out.append(tail)
    return out
