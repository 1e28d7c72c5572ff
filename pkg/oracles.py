"""
Straight-line reference implementations used by the randomized tests.

Each oracle re-derives its result from raw pixels or raw rules with plain loops
and shares no code with panoptic_nav.services.
"""

import struct
from itertools import product
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

RECALL_POINTS = np.linspace(0.0, 1.0, 101)


# ==============================================================
# Fusion
# ==============================================================

def row_major_runs(bits: np.ndarray) -> List[int]:
    runs: List[int] = []
    current = False
    length = 0
    for value in bits.ravel().tolist():
        if bool(value) == current:
            length += 1
        else:
            runs.append(length)
            current = bool(value)
            length = 1
    runs.append(length)
    return runs


def fuse_oracle(semantic: np.ndarray,
                instances: Sequence[Tuple[int, float, np.ndarray]],
                thing_ids: Set[int],
                stuff_ids: Set[int],
                void_id: int,
                confidence_threshold: float,
                overlap_keep_fraction: float,
                min_stuff_area: int,
                min_instance_area: int) -> Tuple[np.ndarray, np.ndarray]:
    """Literal execution of the four fusion steps; instances are (class_id, confidence, bits)."""
    height, width = semantic.shape
    kept = [inst for inst in instances if inst[1] >= confidence_threshold]

    def key(inst):
        runs = row_major_runs(inst[2])
        return (-inst[1], inst[0], struct.pack(f"<{len(runs)}I", *runs))

    kept.sort(key=key)

    classes = [[None] * width for _ in range(height)]
    ids = [[0] * width for _ in range(height)]
    next_id = 1
    for class_id, _, bits in kept:
        area = 0
        fresh = []
        for r in range(height):
            for c in range(width):
                if bits[r, c]:
                    area += 1
                    if classes[r][c] is None:
                        fresh.append((r, c))
        if len(fresh) == 0 or len(fresh) / area < overlap_keep_fraction or len(fresh) < min_instance_area:
            continue
        for r, c in fresh:
            classes[r][c] = class_id
            ids[r][c] = next_id
        next_id += 1

    unclaimed_area: Dict[int, int] = {}
    for r in range(height):
        for c in range(width):
            if classes[r][c] is None:
                label = int(semantic[r, c])
                unclaimed_area[label] = unclaimed_area.get(label, 0) + 1
    for r in range(height):
        for c in range(width):
            if classes[r][c] is None:
                label = int(semantic[r, c])
                if label in stuff_ids and unclaimed_area[label] >= min_stuff_area:
                    classes[r][c] = label
                else:
                    classes[r][c] = void_id
    return np.array(classes, dtype=np.int32), np.array(ids, dtype=np.int32)


# ==============================================================
# Panoptic quality
# ==============================================================

def _segments(class_ids: np.ndarray, instance_ids: np.ndarray) -> Dict[Tuple[int, int], Set[int]]:
    segments: Dict[Tuple[int, int], Set[int]] = {}
    for index, (c, i) in enumerate(zip(class_ids.ravel().tolist(), instance_ids.ravel().tolist())):
        segments.setdefault((c, i), set()).add(index)
    return segments


def exhaustive_pq(pred: Tuple[np.ndarray, np.ndarray],
                  gt: Tuple[np.ndarray, np.ndarray],
                  void_id: int,
                  thing_ids: Set[int]) -> Dict[str, object]:
    """
    Test every (pred, gt) segment pair; return per-class TP/FP/FN keys and PQ values.

    Raises AssertionError if some segment takes part in two pairs with IoU > 0.5.
    """
    pred_segments = _segments(*pred)
    gt_segments = _segments(*gt)
    gt_void = set().union(*[pix for key, pix in gt_segments.items() if key[0] == void_id]) if any(
        key[0] == void_id for key in gt_segments) else set()

    pairs = []
    for p_key, g_key in product(pred_segments, gt_segments):
        if p_key[0] == void_id or g_key[0] == void_id or p_key[0] != g_key[0]:
            continue
        p_pix = pred_segments[p_key] - gt_void
        g_pix = gt_segments[g_key]
        inter = len(pred_segments[p_key] & g_pix)
        union = len(p_pix | g_pix)
        if union and inter / union > 0.5:
            pairs.append((p_key, g_key, inter / union))

    assert len({p for p, _, _ in pairs}) == len(pairs), "a prediction matched twice"
    assert len({g for _, g, _ in pairs}) == len(pairs), "a ground-truth segment matched twice"

    matched_pred = {p for p, _, _ in pairs}
    matched_gt = {g for _, g, _ in pairs}
    per_class: Dict[int, Dict[str, list]] = {}

    def bucket(class_id):
        return per_class.setdefault(class_id, {"tp": [], "fp": [], "fn": []})

    for p_key, g_key, iou in pairs:
        bucket(g_key[0])["tp"].append((p_key, g_key, iou))
    for g_key in gt_segments:
        if g_key[0] != void_id and g_key not in matched_gt:
            bucket(g_key[0])["fn"].append(g_key)
    for p_key, pixels in pred_segments.items():
        if p_key[0] == void_id or p_key in matched_pred:
            continue
        if len(pixels & gt_void) / len(pixels) > 0.5:
            continue
        bucket(p_key[0])["fp"].append(p_key)

    scores: Dict[int, Tuple[float, float, float]] = {}
    for class_id, m in per_class.items():
        tp, fp, fn = len(m["tp"]), len(m["fp"]), len(m["fn"])
        sq = sum(iou for _, _, iou in m["tp"]) / tp if tp else 0.0
        rq = tp / (tp + fp / 2 + fn / 2)
        scores[class_id] = (sq * rq, sq, rq)

    def mean(values):
        return sum(values) / len(values) if values else 0.0

    return {
        "per_class": per_class,
        "scores": scores,
        "pq": mean([s[0] for s in scores.values()]),
        "pq_th": mean([s[0] for c, s in scores.items() if c in thing_ids]),
        "pq_st": mean([s[0] for c, s in scores.items() if c not in thing_ids]),
    }


# ==============================================================
# Semantic IoU
# ==============================================================

def pixel_tally_miou(pred: np.ndarray, gt: np.ndarray, class_ids: Sequence[int],
                     void_id: int) -> Tuple[Dict[int, Optional[float]], float]:
    tp = {c: 0 for c in class_ids}
    fp = {c: 0 for c in class_ids}
    fn = {c: 0 for c in class_ids}
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if g == void_id:
            continue
        if p == g:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    ious: Dict[int, Optional[float]] = {}
    for c in class_ids:
        if c == void_id:
            continue
        total = tp[c] + fp[c] + fn[c]
        ious[c] = tp[c] / total if total else None
    defined = [v for v in ious.values() if v is not None]
    return ious, (sum(defined) / len(defined) if defined else 0.0)


# ==============================================================
# Average precision
# ==============================================================

def pixel_box(bits: np.ndarray) -> Optional[Tuple[int, int, int, int]]:
    ys, xs = np.nonzero(bits)
    if ys.size == 0:
        return None
    return (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def box_pixels(box: Tuple[int, int, int, int]) -> Set[Tuple[int, int]]:
    x0, y0, x1, y1 = box
    return {(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)}


def pair_iou(a: np.ndarray, b: np.ndarray, kind: str) -> float:
    if kind == "box":
        pa, pb = box_pixels(pixel_box(a)), box_pixels(pixel_box(b))
    else:
        pa = set(zip(*np.nonzero(a)))
        pb = set(zip(*np.nonzero(b)))
    union = len(pa | pb)
    return len(pa & pb) / union if union else 0.0


def enumerate_ap(preds: Sequence[Sequence[Tuple[float, np.ndarray]]],
                 gts: Sequence[Sequence[np.ndarray]],
                 kind: str,
                 threshold: float) -> float:
    """
    AP of one class at one threshold by walking the PR curve point by point.

    preds[i] holds (confidence, bits) of image i; gts[i] holds gt masks. Ties in
    confidence are broken by image index, then by the packed run list.
    """
    total_gt = sum(len(g) for g in gts)
    if total_gt == 0:
        return 0.0
    ranked = []
    for image, items in enumerate(preds):
        for confidence, bits in items:
            runs = row_major_runs(bits)
            ranked.append((-confidence, image, struct.pack(f"<{len(runs)}I", *runs), bits))
    ranked.sort(key=lambda e: e[:3])

    used = [[False] * len(g) for g in gts]
    points = []
    tp = fp = 0
    for _, image, _, bits in ranked:
        best, best_iou = None, -1.0
        for j, gt_bits in enumerate(gts[image]):
            if used[image][j]:
                continue
            iou = pair_iou(bits, gt_bits, kind)
            if iou >= threshold and iou > best_iou:
                best, best_iou = j, iou
        if best is None:
            fp += 1
        else:
            used[image][best] = True
            tp += 1
        points.append((tp / total_gt, tp / (tp + fp)))

    total = 0.0
    for level in RECALL_POINTS:
        candidates = [p for r, p in points if r >= level]
        total += max(candidates) if candidates else 0.0
    return total / len(RECALL_POINTS)


# ==============================================================
# Feedback scheduling
# ==============================================================

SECTOR_RANK = {"left": 0, "center": 1, "right": 2}


def replay_feedback_rules(frames: Sequence[Tuple[int, Sequence[dict]]],
                          max_events: int,
                          suppression_us: int,
                          reapproach_fraction: float) -> List[List[dict]]:
    """
    frames: (timestamp_us, candidates) with candidates as dicts holding class_id,
    sector ('left'|'center'|'right'), distance_mm (or None) and priority.
    Returns the emitted candidates per frame.
    """
    last: Dict[Tuple[int, str], Tuple[int, Optional[int]]] = {}
    output = []
    for now, candidates in frames:
        ordered = sorted(candidates, key=lambda e: (
            -e["priority"], e["class_id"], SECTOR_RANK[e["sector"]],
            e["distance_mm"] if e["distance_mm"] is not None else float("inf"),
        ))
        emitted = []
        for event in ordered:
            if len(emitted) == max_events:
                break
            key = (event["class_id"], event["sector"])
            if key in last:
                when, distance = last[key]
                within = now - when < suppression_us
                closer = (distance is not None and event["distance_mm"] is not None
                          and distance - event["distance_mm"] > reapproach_fraction * distance)
                if within and not closer:
                    continue
            emitted.append(event)
            last[key] = (now, event["distance_mm"])
        output.append(emitted)
    return output


# ==============================================================
# Latest-wins hand-off
# ==============================================================

def latest_wins_single_stage(arrivals: Sequence[Tuple[int, int]], service_us: int) -> Tuple[List[int], int]:
    """
    One server with a capacity-1 waiting slot that a newer item overwrites.

    arrivals: (time_us, item) with distinct times; returns (items served in order, drops).
    """
    served: List[int] = []
    drops = 0
    busy_until: Optional[int] = None
    waiting: Optional[int] = None
    for time_us, item in sorted(arrivals):
        while busy_until is not None and busy_until < time_us:
            if waiting is None:
                busy_until = None
            else:
                served.append(waiting)
                waiting = None
                busy_until += service_us
        if busy_until is None:
            served.append(item)
            busy_until = time_us + service_us
        else:
            if waiting is not None:
                drops += 1
            waiting = item
    if waiting is not None:
        served.append(waiting)
    return served, drops
