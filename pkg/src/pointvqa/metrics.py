"""Answer and localization evaluation suite.

Text metrics (exact match, BLEU, ROUGE-L, METEOR, CIDEr-D) share one
tokenizer: lowercase, punctuation separated from words, whitespace split.
Localization is IoU-thresholded accuracy with a strict ``>`` at the
threshold. Stored metric values live in their natural ranges ([0, 1] for
everything except CIDEr's [0, 10]); any display scaling happens only in
``render_table``.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .geometry import AxisAlignedBox, iou

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")

ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_THETA = 3.0
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4


def tokenize(text: str):
    return _TOKEN_RE.findall(text.lower())


def normalize_answer(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class EvalPair:
    prediction: str
    references: tuple
    pred_box: AxisAlignedBox | None = None
    gt_box: AxisAlignedBox | None = None

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not self.references:
            raise ValueError("references must be nonempty")
        if (self.pred_box is None) != (self.gt_box is None):
            raise ValueError("pred_box and gt_box must be present together")


def em_at_1(pred: str, refs) -> int:
    """1 iff the normalized prediction equals any normalized reference."""
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(r) for r in refs))


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(preds, refs_lists, max_n: int = 4) -> float:
    """Corpus-level BLEU with brevity penalty and no smoothing.

    Clipped n-gram precisions are pooled over the corpus; a zero match count
    at any order gives score 0. Orders with zero candidate n-grams anywhere
    in the corpus are skipped (short-answer corpora). The reference length r
    uses, per sample, the reference closest in length to the candidate
    (ties toward the shorter).
    """
    preds = list(preds)
    refs_lists = [list(r) for r in refs_lists]
    if not preds or len(preds) != len(refs_lists):
        raise ValueError("need a nonempty corpus with one refs list per prediction")
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    matched = [0] * max_n
    total = [0] * max_n
    c_len = 0
    r_len = 0
    for pred, refs in zip(preds, refs_lists):
        pt = tokenize(pred)
        rts = [tokenize(r) for r in refs]
        c_len += len(pt)
        r_len += min((abs(len(rt) - len(pt)), len(rt)) for rt in rts)[1]
        for n in range(1, max_n + 1):
            cand = _ngrams(pt, n)
            total[n - 1] += sum(cand.values())
            if not cand:
                continue
            best = Counter()
            for rt in rts:
                ref = _ngrams(rt, n)
                for g in cand:
                    best[g] = max(best[g], ref.get(g, 0))
            matched[n - 1] += sum(min(cnt, best[g]) for g, cnt in cand.items())
    log_sum = 0.0
    orders = 0
    for n in range(max_n):
        if total[n] == 0:
            continue
        if matched[n] == 0:
            return 0.0
        log_sum += math.log(matched[n] / total[n])
        orders += 1
    if orders == 0 or c_len == 0:
        return 0.0
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return bp * math.exp(log_sum / orders)


def _lcs_length(a, b):
    m, n = len(a), len(b)
    prev = [0] * (n + 1)
    for i in range(1, m + 1):
        cur = [0] * (n + 1)
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[n]


def rouge_l(pred: str, refs) -> float:
    """LCS F-measure (beta = 1.2), max over references."""
    pt = tokenize(pred)
    best = 0.0
    b2 = ROUGE_BETA ** 2
    for ref in refs:
        rt = tokenize(ref)
        if not pt or not rt:
            continue
        lcs = _lcs_length(pt, rt)
        if lcs == 0:
            continue
        p = lcs / len(pt)
        r = lcs / len(rt)
        best = max(best, (1 + b2) * p * r / (r + b2 * p))
    return best


def stem(word: str) -> str:
    """Minimal suffix-stripping stemmer used by the METEOR stem stage.

    Strips the longest of ing/ed/es/s once, provided at least three
    characters remain.
    """
    for suffix in ("ing", "ed", "es", "s"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[: -len(suffix)]
    return word


def _meteor_alignment(pt, rt):
    """Greedy two-stage alignment: exact matches first, then stem matches.

    Each stage scans candidate positions left to right and takes the
    earliest unmatched reference position with the same (stemmed) word.
    Returns the list of (pred_pos, ref_pos) pairs sorted by pred_pos.
    """
    matched_p = [False] * len(pt)
    matched_r = [False] * len(rt)
    pairs = []
    for key in (lambda w: w, stem):
        for i, w in enumerate(pt):
            if matched_p[i]:
                continue
            for j, v in enumerate(rt):
                if not matched_r[j] and key(w) == key(v):
                    matched_p[i] = matched_r[j] = True
                    pairs.append((i, j))
                    break
    return sorted(pairs)


def _count_chunks(pairs):
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(pred: str, refs) -> float:
    """Exact+stem METEOR with alpha=0.9, gamma=0.5, theta=3; max over refs."""
    pt = tokenize(pred)
    best = 0.0
    for ref in refs:
        rt = tokenize(ref)
        if not pt or not rt:
            continue
        pairs = _meteor_alignment(pt, rt)
        m = len(pairs)
        if m == 0:
            continue
        p = m / len(pt)
        r = m / len(rt)
        f_mean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
        penalty = METEOR_GAMMA * (_count_chunks(pairs) / m) ** METEOR_THETA
        best = max(best, f_mean * (1 - penalty))
    return best


def _cider_vec(tokens, df, log_n):
    vec = [Counter() for _ in range(CIDER_MAX_N)]
    norm = [0.0] * CIDER_MAX_N
    for n in range(1, CIDER_MAX_N + 1):
        for gram, count in _ngrams(tokens, n).items():
            idf = log_n - math.log(max(1.0, df[n - 1].get(gram, 0.0)))
            vec[n - 1][gram] = count * idf
        norm[n - 1] = math.sqrt(sum(v * v for v in vec[n - 1].values()))
    return vec, norm


def cider_per_sample(preds, refs_lists):
    """CIDEr-D per-sample scores in [0, 10].

    IDF uses document frequency over the reference corpus (one document per
    sample); candidate counts are clipped against the reference, and a
    Gaussian length-difference penalty with sigma = 6 is applied per order.
    """
    preds = list(preds)
    refs_lists = [list(r) for r in refs_lists]
    if len(preds) < 2:
        raise ValueError("CIDEr needs a corpus of >= 2 samples for the IDF")
    if len(preds) != len(refs_lists):
        raise ValueError("one reference list per prediction required")
    df = [Counter() for _ in range(CIDER_MAX_N)]
    for refs in refs_lists:
        for n in range(1, CIDER_MAX_N + 1):
            grams = set()
            for ref in refs:
                grams |= set(_ngrams(tokenize(ref), n))
            for g in grams:
                df[n - 1][g] += 1
    log_n = math.log(len(preds))

    scores = []
    for pred, refs in zip(preds, refs_lists):
        pt = tokenize(pred)
        cvec, cnorm = _cider_vec(pt, df, log_n)
        acc = 0.0
        for ref in refs:
            rt = tokenize(ref)
            rvec, rnorm = _cider_vec(rt, df, log_n)
            sim = 0.0
            for n in range(CIDER_MAX_N):
                val = sum(min(cvec[n][g], rvec[n][g]) * rvec[n][g]
                          for g in cvec[n])
                if cnorm[n] > 0 and rnorm[n] > 0:
                    val /= cnorm[n] * rnorm[n]
                else:
                    val = 0.0
                delta = len(pt) - len(rt)
                val *= math.exp(-delta * delta / (2 * CIDER_SIGMA ** 2))
                sim += val
            acc += sim / CIDER_MAX_N
        scores.append(10.0 * acc / len(refs))
    return scores


def cider(preds, refs_lists) -> float:
    return float(np.mean(cider_per_sample(preds, refs_lists)))


def acc_at_iou(pairs, threshold: float) -> float:
    """Fraction of pairs with iou(pred_box, gt_box) strictly above threshold."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one pair")
    hits = 0
    for pair in pairs:
        if pair.pred_box is None or pair.gt_box is None:
            raise ValueError("acc_at_iou needs boxes on every pair")
        hits += iou(pair.pred_box, pair.gt_box) > threshold
    return hits / len(pairs)


@dataclass
class MetricReport:
    em1: float
    bleu1: float
    bleu4: float
    rouge_l: float
    meteor: float
    cider: float
    acc025: float | None
    acc05: float | None
    per_sample: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "em1": self.em1, "bleu1": self.bleu1, "bleu4": self.bleu4,
            "rouge_l": self.rouge_l, "meteor": self.meteor,
            "cider": self.cider, "acc025": self.acc025, "acc05": self.acc05,
            "per_sample": self.per_sample}, indent=2)


def compute_report(pairs) -> MetricReport:
    """Full metric suite over a list of EvalPairs.

    EM, ROUGE-L, METEOR and CIDEr aggregate as per-sample means; BLEU is
    corpus-level. Localization accuracies are included when boxes are
    present (they must be present on all pairs or none).
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one evaluation pair")
    preds = [p.prediction for p in pairs]
    refs = [p.references for p in pairs]
    ems = [em_at_1(p.prediction, p.references) for p in pairs]
    rouges = [rouge_l(p.prediction, p.references) for p in pairs]
    meteors = [meteor(p.prediction, p.references) for p in pairs]
    ciders = cider_per_sample(preds, refs) if len(pairs) >= 2 else [0.0] * len(pairs)

    with_boxes = [p for p in pairs if p.pred_box is not None]
    if with_boxes and len(with_boxes) != len(pairs):
        raise ValueError("boxes must be present on all pairs or none")
    ious = [iou(p.pred_box, p.gt_box) for p in with_boxes]

    per_sample = []
    for i, p in enumerate(pairs):
        row = {"prediction": p.prediction, "references": list(p.references),
               "em1": ems[i], "rouge_l": rouges[i], "meteor": meteors[i],
               "cider": ciders[i]}
        if with_boxes:
            row["iou"] = ious[i]
            row["acc025"] = int(ious[i] > 0.25)
            row["acc05"] = int(ious[i] > 0.5)
        per_sample.append(row)

    return MetricReport(
        em1=float(np.mean(ems)),
        bleu1=bleu(preds, refs, max_n=1),
        bleu4=bleu(preds, refs, max_n=4),
        rouge_l=float(np.mean(rouges)),
        meteor=float(np.mean(meteors)),
        cider=float(np.mean(ciders)),
        acc025=acc_at_iou(pairs, 0.25) if with_boxes else None,
        acc05=acc_at_iou(pairs, 0.5) if with_boxes else None,
        per_sample=per_sample)


def render_table(report: MetricReport) -> str:
    """Aligned plain-text table in the conventional column order.

    [0, 1] metrics are shown as percentages; CIDEr (stored in [0, 10]) is
    scaled by 10 so every column reads on a 0-100 scale.
    """
    headers = ["EM@1", "BLEU-1", "BLEU-4", "ROUGE", "METEOR", "CIDEr"]
    values = [report.em1 * 100, report.bleu1 * 100, report.bleu4 * 100,
              report.rouge_l * 100, report.meteor * 100, report.cider * 10]
    if report.acc025 is not None:
        headers += ["Acc@0.25", "Acc@0.5"]
        values += [report.acc025 * 100, report.acc05 * 100]
    widths = [max(len(h), 8) for h in headers]
    line1 = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    line2 = "  ".join(f"{v:.2f}".rjust(w) for v, w in zip(values, widths))
    return line1 + "\n" + line2


def pairs_from_predictions(predictions, qa_records):
    """Join prediction records with ground-truth QA records into EvalPairs."""
    by_id = {r.question_id: r for r in qa_records}
    pairs = []
    for pred in predictions:
        qid = pred["question_id"]
        if qid not in by_id:
            raise ValueError(f"prediction references unknown question {qid!r}")
        rec = by_id[qid]
        pred_box = gt_box = None
        if rec.gt_boxes and "bbox" in pred:
            gt_box = rec.gt_boxes[0].box
            pred_box = AxisAlignedBox(center=pred["bbox"]["center"],
                                      size=pred["bbox"]["size"])
        pairs.append(EvalPair(prediction=pred["answer_top1"],
                              references=tuple(rec.answers),
                              pred_box=pred_box, gt_box=gt_box))
    return pairs
