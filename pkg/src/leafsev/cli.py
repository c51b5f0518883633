"""``leafsev`` command line: quantify, eval, stats, synth, serve."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from leafsev import __version__
from leafsev.errors import LeafsevError
from leafsev.raster import decode_image, encode_png
from leafsev.severity import QuantConfig, annotate, quantify_detailed

log = logging.getLogger("leafsev")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("LEAFSEV_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            log.warning("ignoring non-integer LEAFSEV_THREADS=%r", cap)
    return max(1, min(limit, n_jobs))


def _rect(text):
    try:
        parts = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"rect must be x,y,w,h integers, got {text!r}") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"rect must have four fields, got {text!r}")
    return tuple(parts)


def _emit(doc, pretty=False):
    print(json.dumps(doc, indent=2 if pretty else None))


# -- quantify --------------------------------------------------------------


def _quantify_one(path: str, cfg: QuantConfig, out_dir, want_annotation):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        return {"image": path, "error": f"cannot read file: {exc.strerror or exc}"}
    try:
        m = quantify_detailed(decode_image(raw), cfg, name=path)
    except (LeafsevError, ValueError) as exc:
        return {"image": path, "error": str(exc)}
    if out_dir is not None:
        stem = Path(path).stem
        (out_dir / f"{stem}.json").write_text(m.report.to_json(indent=2))
        if want_annotation:
            (out_dir / f"{stem}_annotated.png").write_bytes(encode_png(annotate(m.image, m.disease_mask)))
    return m.report.to_dict()


def _pretty_report(rec):
    if "error" in rec:
        return f"{rec['image']}: ERROR {rec['error']}"
    lines = [f"{rec['image']}: DS = {rec['ds']:.2f}%  (d={rec['d']}, lad={rec['lad']}, "
             f"mode={rec['mode']}, k={rec['k']})"]
    for i, c in enumerate(rec["clusters"]):
        cen = ", ".join(f"{v:.3f}" for v in c["centroid"])
        lines.append(f"  cluster {i}: [{cen}] {c['pixels']:>8} px  {c['class']}")
    return "\n".join(lines)


def cmd_quantify(args) -> int:
    try:
        cfg = QuantConfig(color_mode=args.mode, k=args.k, iterations=args.iters, rect=args.rect,
                          seed=args.seed)
    except ValueError as exc:
        print(f"leafsev quantify: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=worker_count(len(args.images))) as pool:
        records = list(pool.map(lambda p: _quantify_one(p, cfg, out_dir, args.annotate), args.images))
    failed = 0
    for rec in records:
        if "error" in rec:
            failed += 1
            print(f"leafsev quantify: {rec['image']}: {rec['error']}", file=sys.stderr)
        print(_pretty_report(rec) if args.pretty else json.dumps(rec))
    return EXIT_DATA if failed else EXIT_OK


# -- eval ------------------------------------------------------------------


def cmd_eval(args) -> int:
    from leafsev.deteval import evaluate, load_voc_dir, read_detections

    try:
        gts = load_voc_dir(args.gt)
        with open(args.det, encoding="utf-8") as fh:
            dets = read_detections(fh)
    except (OSError, LeafsevError) as exc:
        print(f"leafsev eval: {exc}", file=sys.stderr)
        return EXIT_DATA
    report = evaluate(dets, gts, iou_thr=args.iou, interp=args.interp)
    for w in report.warnings:
        print(f"leafsev eval: warning: {w}", file=sys.stderr)
    if args.pretty:
        print(f"mAP@{args.iou:g} ({args.interp}): {report.map:.4f}")
        for c, row in report.to_dict()["classes"].items():
            print(f"  {c:<12} AP={row['ap']:.4f}  TP={row['tp']} FP={row['fp']} FN={row['fn']}")
    else:
        _emit(report.to_dict())
    return EXIT_OK


# -- stats -----------------------------------------------------------------


def cmd_stats(args) -> int:
    from leafsev.stats import compare_treatments, read_treatments_csv

    try:
        text = Path(args.csv).read_text(encoding="utf-8")
        doc = compare_treatments(read_treatments_csv(text), alpha=args.alpha)
    except (OSError, ValueError, LeafsevError) as exc:
        print(f"leafsev stats: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.pretty:
        a = doc["anova"]
        print(f"ANOVA  F({a['df_between']}, {a['df_within']}) = {a['f']:.4f}  p = {a['p']:.4g}")
        for t in doc["tukey"]:
            flag = "*" if t["significant"] else ""
            print(f"  Tukey {t['pair'][0]} vs {t['pair'][1]}: q = {t['statistic']:.3f}  p = {t['p']:.4g} {flag}")
        for name, ci in doc["ci"].items():
            print(f"  {name}: mean {ci['mean']:.4g}  CI [{ci['lower']:.4g}, {ci['upper']:.4g}]")
    else:
        _emit(doc)
    return EXIT_OK


# -- synth -----------------------------------------------------------------


def cmd_synth(args) -> int:
    from leafsev.synth import SynthSpec, leaf_fixture, render

    try:
        if args.spec:
            spec = SynthSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        else:
            spec = leaf_fixture(args.ds, seed=args.seed)
        img, truth, _ = render(spec)
    except (OSError, ValueError, LeafsevError) as exc:
        print(f"leafsev synth: {exc}", file=sys.stderr)
        return EXIT_DATA
    Path(args.out).write_bytes(encode_png(img))
    if args.truth:
        Path(args.truth).write_text(json.dumps(truth.to_dict(), indent=2))
    _emit(truth.to_dict())
    return EXIT_OK


# -- serve -----------------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    from leafsev.service import create_app

    app = create_app(data_dir=args.data_dir, max_body=args.max_body, workers=args.workers)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leafsev", description="Leaf disease severity toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantify", help="disease severity of leaf photographs")
    q.add_argument("images", nargs="+")
    q.add_argument("--mode", choices=["rgb", "value"], default="value")
    q.add_argument("--k", type=int, default=5, help="clusters (3 suits 25-50%% severity)")
    q.add_argument("--iters", type=int, default=5, help="GrabCut iterations")
    q.add_argument("--rect", type=_rect, default=None, help="x,y,w,h foreground rectangle")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", help="directory for per-image report JSON")
    q.add_argument("--annotate", action="store_true", help="also write disease-tinted PNGs to --out")
    q.add_argument("--pretty", action="store_true")
    q.set_defaults(func=cmd_quantify)

    e = sub.add_parser("eval", help="detection AP/mAP against Pascal-VOC annotations")
    e.add_argument("--gt", required=True, help="directory of VOC XML files")
    e.add_argument("--det", required=True, help="detections JSON-lines file")
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--interp", choices=["all", "11pt"], default="all")
    e.add_argument("--pretty", action="store_true")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="ANOVA, Tukey, CIs and KS over treatment columns")
    s.add_argument("--csv", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--pretty", action="store_true")
    s.set_defaults(func=cmd_stats)

    y = sub.add_parser("synth", help="render a synthetic leaf with known severity")
    src = y.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="SynthSpec JSON file")
    src.add_argument("--ds", type=float, help="target severity for a generated fixture")
    y.add_argument("--seed", type=int, default=0, help="fixture seed (with --ds)")
    y.add_argument("--out", required=True, help="output PNG")
    y.add_argument("--truth", help="output ground-truth JSON")
    y.set_defaults(func=cmd_synth)

    v = sub.add_parser("serve", help="run the HTTP API")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.add_argument("--data-dir", default="data")
    v.add_argument("--max-body", type=int, default=20 * 1024 * 1024)
    v.add_argument("--workers", type=int, default=2)
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
