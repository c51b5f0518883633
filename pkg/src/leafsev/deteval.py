"""Detection evaluation: Pascal-VOC annotations, IoU, per-class AP and mAP."""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

import numpy as np

from leafsev.errors import AnnotationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate box {self.as_list()}: need xmax > xmin and ymax > ymin")

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def as_list(self):
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class GroundTruthBox:
    image: str
    cls: str
    box: Box


@dataclass(frozen=True)
class Detection:
    image: str
    cls: str
    box: Box
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def image_key(name: str) -> str:
    """Match annotations and detections by file stem (``leaf_01.jpg`` -> ``leaf_01``)."""
    return PurePosixPath(str(name).replace("\\", "/")).stem


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when they do not overlap."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


# -- annotation and detection input ------------------------------------------


def _coord(obj, idx, tag):
    el = obj.find(f"bndbox/{tag}")
    if el is None or el.text is None or not el.text.strip():
        raise AnnotationError(f"object[{idx}]/bndbox/{tag} is missing")
    try:
        return int(round(float(el.text)))
    except ValueError as exc:
        raise AnnotationError(f"object[{idx}]/bndbox/{tag} is not a number: {el.text!r}") from exc


def parse_voc_xml(data) -> tuple[str, list[GroundTruthBox]]:
    """Read one LabelImg/Pascal-VOC annotation file.

    Returns the image id (file stem of ``<filename>``) and one box per ``<object>``.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise AnnotationError(f"malformed XML at line {line}, column {col}: {exc}") from exc
    fname = root.findtext("filename")
    if not fname:
        raise AnnotationError("annotation has no <filename>")
    if root.find("size") is None:
        raise AnnotationError("annotation has no <size>")
    image = image_key(fname)
    boxes = []
    for idx, obj in enumerate(root.findall("object")):
        name = (obj.findtext("name") or "").strip()
        if not name:
            raise AnnotationError(f"object[{idx}]/name is missing")
        if obj.find("bndbox") is None:
            raise AnnotationError(f"object[{idx}]/bndbox is missing")
        xmin, ymin, xmax, ymax = (_coord(obj, idx, t) for t in ("xmin", "ymin", "xmax", "ymax"))
        try:
            box = Box(xmin, ymin, xmax, ymax)
        except ValueError as exc:
            raise AnnotationError(f"object[{idx}]: {exc}") from exc
        boxes.append(GroundTruthBox(image=image, cls=name, box=box))
    return image, boxes


def load_voc_dir(path) -> list[GroundTruthBox]:
    gts = []
    for xml_path in sorted(Path(path).glob("*.xml")):
        try:
            gts.extend(parse_voc_xml(xml_path.read_bytes())[1])
        except AnnotationError as exc:
            raise AnnotationError(f"{xml_path.name}: {exc}") from exc
    return gts


def read_detections(lines) -> list[Detection]:
    """Parse JSON-lines records ``{image, class, confidence, box: [xmin, ymin, xmax, ymax]}``."""
    dets = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            box = Box(*(float(v) for v in rec["box"]))
            dets.append(
                Detection(
                    image=image_key(rec["image"]),
                    cls=str(rec["class"]),
                    box=box,
                    confidence=float(rec["confidence"]),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise AnnotationError(f"detections line {lineno}: {exc}") from exc
    return dets


# -- AP --------------------------------------------------------------------


def match_detections(dets, gts, iou_thr=0.5):
    """Greedy matching in confidence order; returns (order, true-positive flags)."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    by_image: dict[str, list[Box]] = {}
    for g in gts:
        by_image.setdefault(g.image, []).append(g.box)
    used = {img: [False] * len(boxes) for img, boxes in by_image.items()}
    tp = np.zeros(len(dets), dtype=bool)
    for rank, i in enumerate(order):
        det = dets[i]
        best_j, best_iou = -1, iou_thr
        for j, gbox in enumerate(by_image.get(det.image, ())):
            if used[det.image][j]:
                continue
            o = iou(det.box, gbox)
            if o >= best_iou and (best_j < 0 or o > best_iou):
                best_j, best_iou = j, o
        if best_j >= 0:
            used[det.image][best_j] = True
            tp[rank] = True
    return order, tp


def _ap_all_point(recall, precision):
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]).sum())


def _ap_11_point(recall, precision):
    ap = 0.0
    for t in np.linspace(0.0, 1.0, 11):
        above = precision[recall >= t]
        ap += (above.max() if above.size else 0.0) / 11.0
    return float(ap)


def average_precision(dets, gts, iou_thr=0.5, interp="all"):
    """AP for a single class.

    Returns ``(ap, curve)`` where ``curve`` lists ``(recall, precision)`` after
    each detection in confidence order.  ``interp`` is ``"all"`` (every
    recall step) or ``"11pt"`` (VOC2007 eleven-point average).
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    if interp not in ("all", "11pt"):
        raise ValueError(f"interp must be 'all' or '11pt', got {interp!r}")
    if not dets:
        return 0.0, []
    _, tp = match_detections(dets, gts, iou_thr)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    precision = ctp / (ctp + cfp)
    if not gts:
        return 0.0, [(0.0, float(p)) for p in precision]
    recall = ctp / len(gts)
    ap = _ap_all_point(recall, precision) if interp == "all" else _ap_11_point(recall, precision)
    return ap, [(float(r), float(p)) for r, p in zip(recall, precision)]


def mean_ap(per_class_ap) -> float:
    if not per_class_ap:
        raise ValueError("mean_ap needs at least one class")
    return float(sum(per_class_ap.values()) / len(per_class_ap))


@dataclass
class EvalReport:
    ap: dict
    map: float
    tp: dict
    fp: dict
    fn: dict
    iou_threshold: float
    interp: str
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "iou_threshold": self.iou_threshold,
            "interp": self.interp,
            "mAP": self.map,
            "classes": {
                c: {"ap": self.ap[c], "tp": self.tp[c], "fp": self.fp[c], "fn": self.fn[c]}
                for c in sorted(self.ap)
            },
            "warnings": list(self.warnings),
        }


def evaluate(dets, gts, iou_thr=0.5, interp="all") -> EvalReport:
    """Per-class AP, TP/FP/FN counts and mAP over every class seen in either input."""
    gt_classes = {g.cls for g in gts}
    classes = sorted(gt_classes | {d.cls for d in dets})
    ap, tps, fps, fns, warnings = {}, {}, {}, {}, []
    for c in classes:
        cd = [d for d in dets if d.cls == c]
        cg = [g for g in gts if g.cls == c]
        if c not in gt_classes:
            msg = f"class {c!r} appears in detections but not in ground truth; AP set to 0"
            log.warning(msg)
            warnings.append(msg)
        ap[c], _ = average_precision(cd, cg, iou_thr, interp)
        _, tp = match_detections(cd, cg, iou_thr)
        tps[c] = int(tp.sum())
        fps[c] = int((~tp).sum())
        fns[c] = len(cg) - tps[c]
    m = mean_ap(ap) if ap else 0.0
    return EvalReport(ap=ap, map=m, tp=tps, fp=fps, fn=fns, iou_threshold=iou_thr,
                      interp=interp, warnings=warnings)
