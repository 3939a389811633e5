"""Slow, independent reference implementations used as test oracles.

Nothing here imports the package's metric, cost or assignment code.  The
metric oracles enumerate every per-frame matching instead of solving an
assignment problem, and compare objective values with a small tolerance so
that floating-point noise cannot pick a different optimum.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

TOL = 1e-9
ALPHAS = [0.05 + 0.05 * i for i in range(19)]


def box_iou(a, b) -> float:
    ax1, ay1, aw, ah = (float(v) for v in a)
    bx1, by1, bw, bh = (float(v) for v in b)
    iw = min(ax1 + aw, bx1 + bw) - max(ax1, bx1)
    ih = min(ay1 + ah, by1 + bh) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def partial_matchings(n: int, m: int):
    """Every one-to-one partial matching between ``range(n)`` and ``range(m)``."""
    for k in range(min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                yield list(zip(rows, cols))


def _by_frame(rows):
    """rows: list of (frame, id, box) -> {frame: [(id, box), ...]}"""
    out = {}
    for f, i, b in rows:
        out.setdefault(int(f), []).append((int(i), list(b)))
    return out


def table_rows(table):
    return [(int(f), int(i), table.boxes[k].tolist()) for k, (f, i) in enumerate(zip(table.frame, table.id))]


# assignment -----------------------------------------------------------------


def min_cost_permutation(cm) -> float:
    """Minimum total cost over assignments of ``min(n, m)`` pairs (finite entries only)."""
    cm = np.asarray(cm, dtype=float)
    n, m = cm.shape
    best = math.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = min(best, math.fsum(cm[r, c] for r, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = min(best, math.fsum(cm[r, c] for c, r in enumerate(rows)))
    return best


# HOTA -----------------------------------------------------------------------


def hota_reference(gt_rows, pred_rows):
    """TrackEval-style HOTA by exhaustive per-frame matching.

    Returns a dict of the alpha-averaged HOTA, DetA, AssA, LocA, DetRe, DetPr,
    AssRe and AssPr.
    """
    G, P = _by_frame(gt_rows), _by_frame(pred_rows)
    frames = sorted(set(G) | set(P))
    gt_ids = sorted({i for _, i, _ in gt_rows})
    pr_ids = sorted({i for _, i, _ in pred_rows})
    g_count = {g: 0 for g in gt_ids}
    p_count = {p: 0 for p in pr_ids}
    potential = {(g, p): 0.0 for g in gt_ids for p in pr_ids}
    sims = {}
    for f in frames:
        gs, ps = G.get(f, []), P.get(f, [])
        for g, _ in gs:
            g_count[g] += 1
        for p, _ in ps:
            p_count[p] += 1
        S = [[box_iou(gb, pb) for _, pb in ps] for _, gb in gs]
        sims[f] = S
        for a, (g, _) in enumerate(gs):
            for b, (p, _) in enumerate(ps):
                row = sum(S[a])
                col = sum(S[x][b] for x in range(len(gs)))
                denom = row + col - S[a][b]
                if denom > 0:
                    potential[(g, p)] += S[a][b] / denom
    align = {
        k: v / max(np.finfo(float).eps, g_count[k[0]] + p_count[k[1]] - v) for k, v in potential.items()
    }

    out = {k: [] for k in ("HOTA", "DetA", "AssA", "LocA", "DetRe", "DetPr", "AssRe", "AssPr")}
    for alpha in ALPHAS:
        tp = fn = fp = 0
        loc = 0.0
        matched = {}
        for f in frames:
            gs, ps = G.get(f, []), P.get(f, [])
            S = sims[f]
            best, best_key = [], None
            for m in partial_matchings(len(gs), len(ps)):
                if any(S[a][b] < alpha - np.finfo(float).eps for a, b in m):
                    continue
                key = (len(m), sum(align[(gs[a][0], ps[b][0])] for a, b in m), sum(S[a][b] for a, b in m))
                if best_key is None or _lex_greater(key, best_key):
                    best, best_key = m, key
            tp += len(best)
            fn += len(gs) - len(best)
            fp += len(ps) - len(best)
            for a, b in best:
                loc += S[a][b]
                pair = (gs[a][0], ps[b][0])
                matched[pair] = matched.get(pair, 0) + 1
        ass_a = ass_re = ass_pr = 0.0
        for (g, p), n in matched.items():
            # every TP of this pair contributes the same per-pair score
            ass_a += n * n / (g_count[g] + p_count[p] - n)
            ass_re += n * n / g_count[g]
            ass_pr += n * n / p_count[p]
        det_a = tp / max(1, tp + fn + fp)
        ass_a = ass_a / max(1, tp)
        out["DetA"].append(det_a)
        out["AssA"].append(ass_a)
        out["HOTA"].append(math.sqrt(det_a * ass_a))
        out["LocA"].append(loc / tp if tp else 0.0)
        out["DetRe"].append(tp / max(1, tp + fn))
        out["DetPr"].append(tp / max(1, tp + fp))
        out["AssRe"].append(ass_re / max(1, tp))
        out["AssPr"].append(ass_pr / max(1, tp))
    return {k: float(np.mean(v)) for k, v in out.items()}


def _lex_greater(a, b) -> bool:
    if a[0] != b[0]:
        return a[0] > b[0]
    if abs(a[1] - b[1]) > TOL:
        return a[1] > b[1]
    return a[2] > b[2] + TOL


# CLEAR ----------------------------------------------------------------------


def clear_reference(gt_rows, pred_rows, threshold: float = 0.5):
    """CLEAR MOT with continuity preference, by exhaustive per-frame matching."""
    G, P = _by_frame(gt_rows), _by_frame(pred_rows)
    frames = sorted(set(G) | set(P))
    gt_ids = sorted({i for _, i, _ in gt_rows})
    last_match = {}  # gt -> pred, last ever
    prev_frame_match = {}  # gt -> pred, previous frame only
    present = {g: 0 for g in gt_ids}
    covered = {g: 0 for g in gt_ids}
    starts = {g: 0 for g in gt_ids}
    tp = fn = fp = idsw = 0
    iou_sum = 0.0
    for f in frames:
        gs, ps = G.get(f, []), P.get(f, [])
        S = [[box_iou(gb, pb) for _, pb in ps] for _, gb in gs]
        best, best_key = [], None
        for m in partial_matchings(len(gs), len(ps)):
            if any(S[a][b] < threshold - np.finfo(float).eps for a, b in m):
                continue
            kept = sum(prev_frame_match.get(gs[a][0]) == ps[b][0] for a, b in m)
            key = (kept, sum(S[a][b] for a, b in m), len(m))
            if best_key is None or key[0] > best_key[0] or (
                key[0] == best_key[0] and (key[1] > best_key[1] + TOL)
            ):
                best, best_key = m, key
        current = {}
        for a, b in best:
            g, p = gs[a][0], ps[b][0]
            current[g] = p
            if g in last_match and last_match[g] != p:
                idsw += 1
            last_match[g] = p
            iou_sum += S[a][b]
        for g, _ in gs:
            present[g] += 1
        for g in current:
            covered[g] += 1
            if g not in prev_frame_match:
                starts[g] += 1
        prev_frame_match = current
        tp += len(best)
        fn += len(gs) - len(best)
        fp += len(ps) - len(best)
    ratios = [covered[g] / present[g] for g in gt_ids]
    mt = sum(r >= 0.8 for r in ratios)
    ml = sum(r < 0.2 for r in ratios)
    return {
        "MOTA": 1.0 - (fn + fp + idsw) / (tp + fn),
        "MOTP": iou_sum / tp if tp else 0.0,
        "MT": mt,
        "PT": len(gt_ids) - mt - ml,
        "ML": ml,
        "IDSW": idsw,
        "Frag": sum(max(s - 1, 0) for s in starts.values()),
    }


# IDF1 -----------------------------------------------------------------------


def idf1_reference(gt_rows, pred_rows, threshold: float = 0.5) -> float:
    """IDF1 maximised over every one-to-one GT-ID/pred-ID pairing."""
    G, P = _by_frame(gt_rows), _by_frame(pred_rows)
    gt_ids = sorted({i for _, i, _ in gt_rows})
    pr_ids = sorted({i for _, i, _ in pred_rows})
    best = 0
    for m in partial_matchings(len(gt_ids), len(pr_ids)):
        pairing = {gt_ids[a]: pr_ids[b] for a, b in m}
        idtp = 0
        for f, gs in G.items():
            boxes = dict(P.get(f, []))
            for g, gb in gs:
                p = pairing.get(g)
                if p is not None and p in boxes and box_iou(gb, boxes[p]) >= threshold - np.finfo(float).eps:
                    idtp += 1
        best = max(best, idtp)
    return 2 * best / (len(gt_rows) + len(pred_rows))


# embeddings -----------------------------------------------------------------


def consistency_reference(series: dict, k, threshold: float) -> float:
    """Exhaustive scan over all same-track frame pairs."""
    hits = total = 0
    for frames in series.values():
        ts = sorted(frames)
        for t in ts:
            for s in ts:
                wanted = (s == ts[0] and t != ts[0]) if k == "start" else (t - s == k)
                if wanted:
                    d = math.sqrt(sum((x - y) ** 2 for x, y in zip(frames[t], frames[s])))
                    total += 1
                    hits += d < threshold
    return hits / total


def attention_reference(Q, K, V):
    """Direct loop evaluation of softmax over keys of q.k / sqrt(d), times V."""
    Q, K, V = (np.asarray(x, dtype=float).tolist() for x in (Q, K, V))
    d = len(K[0])
    out = []
    for q in Q:
        scores = [sum(a * b for a, b in zip(k, q)) / math.sqrt(d) for k in K]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        z = sum(ex)
        w = [e / z for e in ex]
        out.append([sum(w[j] * V[j][c] for j in range(len(K))) for c in range(len(V[0]))])
    return np.array(out)
