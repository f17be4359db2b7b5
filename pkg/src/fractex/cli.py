"""Command-line entry point: ``fractex <subcommand> [options]``.

Stages exchange files (PGM images with ``manifest.csv``, features CSV,
JSON reports and models).  Every artifact embeds the hash of the
configuration that produced it.  On failure the process exits nonzero and
writes ``{"error": ..., "message": ...}`` to stderr.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from ._validation import DataError, ParameterError
from .bestbasis import DEFAULT_LAMBDA, SelectionConfig, SubbandAnalyzer, bbs_fd
from .classify import load_model, make_classifier, save_model
from .evaluate import (WalkCache, brodatz_holdout, compare_reports, lopo_images,
                       report_json, report_text, run_lopo, sweep_levels)
from .features import (DivergenceSelector, FeatureMatrix, WaveletPacketFeatures,
                       config_hash)
from .fractal import fd_to_gray
from .imgprep import preprocess, random_cells, shear_deform
from .io import read_image, rescale_to_uint8, write_image, write_pgm
from .synth import (MANIFEST, default_classes, gen_corpus, read_manifest, write_corpus,
                    write_manifest)

DEFAULTS = {
    "channel": "b", "se_size": 5, "method": "bbs_fd", "lambda": DEFAULT_LAMBDA,
    "levels": 4, "window": 7, "classifier": "svm", "seed": 0, "folds": 5,
    "grid_c": "-5:25:2", "grid_gamma": "-15:3:2", "bag_members": 0,
    "threshold": 0.8, "shear": "1,0.3,0,1", "deform_cells": None,
    "n_deform": 2, "patients": 5, "images": 16, "size": 256, "select": False,
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _sha(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip() != ""]


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip() != ""]


def parse_grid(text):
    """Powers of two from ``lo:hi:step`` or a comma list of exponents."""
    text = str(text)
    if ":" in text:
        lo, hi, step = (int(v) for v in text.split(":"))
        exps = range(lo, hi + 1, step)
    else:
        exps = _floats(text)
    grid = tuple(2.0 ** e for e in exps)
    if not grid:
        raise ParameterError(f"empty grid {text!r}")
    return grid


def _settings(args, keys):
    """Resolve ``keys`` from flags, then the JSON config, then defaults."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        out[k] = v if v is not None else cfg.get(k, DEFAULTS.get(k))
    if "lambda" in out and out["lambda"] is not None and out["lambda"] <= 0:
        raise ParameterError("lambda must be positive")
    return out


def _write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_dataset(directory, s, deform=False):
    """Read, preprocess and optionally deform the images of a manifest.

    Unreadable images are collected as errors; the run fails only if a class
    ends up empty.
    """
    manifest = os.path.join(directory, MANIFEST)
    if not os.path.exists(manifest):
        raise DataError(f"{directory}: no {MANIFEST}")
    rows = read_manifest(manifest)
    if not rows:
        raise DataError("no input rows")
    classes = sorted({r["label"] for r in rows})
    imgs, kept, errors = [], [], []
    for r in rows:
        try:
            raw = read_image(os.path.join(directory, r["filename"]))
            img = preprocess(raw, s["channel"].upper(), s["se_size"])
        except (OSError, ValueError) as exc:
            errors.append({"filename": r["filename"], "error": str(exc)})
            continue
        if deform and s.get("deform_cells"):
            img = shear_deform(img, _ints(s["deform_cells"]), _floats(s["shear"]))
        imgs.append(img)
        kept.append(r)
    empty = [c for c in classes if not any(r["label"] == c for r in kept)]
    if empty:
        raise DataError(f"classes without readable images: {empty}")
    return imgs, kept, errors, _sha(manifest)


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    s = _settings(args, ["patients", "images", "size", "seed"])
    classes = default_classes(s["size"], s["patients"], s["images"])
    items = gen_corpus(classes, seed=s["seed"])
    write_corpus(items, args.out)
    conf = {"stage": "synth", **s}
    _write(os.path.join(args.out, "synth.json"),
           json.dumps({"config": conf, "config_hash": config_hash(conf),
                       "n_images": len(items)}, indent=1, sort_keys=True) + "\n")
    return {"images": len(items), "out": args.out}


def _dump(directory, name, raster):
    os.makedirs(directory, exist_ok=True)
    write_pgm(os.path.join(directory, os.path.splitext(name)[0] + ".pgm"), raster)


def cmd_extract(args):
    s = _settings(args, ["channel", "se_size", "method", "lambda", "levels", "window",
                         "deform_cells", "shear"])
    imgs, rows, errors, digest = _load_dataset(args.input, s, deform=True)
    conf = {"stage": "extract", "manifest_sha256": digest, **s}
    h = config_hash(conf)
    wpf = WaveletPacketFeatures(s["method"], s["lambda"], s["levels"],
                                window=s["window"])
    labels = [r["label"] for r in rows]
    X = wpf.fit_transform(imgs, labels)
    fm = FeatureMatrix(X, labels, [r["patient"] for r in rows], wpf.feature_names_,
                       [r["filename"] for r in rows],
                       {"config": conf, "config_hash": h, "errors": errors,
                        "basis": wpf.basis_.to_dict()["subbands"]})
    fm.to_csv(args.out)
    side = args.paths_dir or os.path.splitext(args.out)[0] + ".paths"
    os.makedirs(side, exist_ok=True)
    for r, p in zip(rows, wpf.paths_):
        doc = dict(p.to_dict(), image=r["filename"], config_hash=h)
        _write(os.path.join(side, os.path.splitext(r["filename"])[0] + ".json"),
               json.dumps(doc, indent=1, sort_keys=True) + "\n")
    if args.dump_subband or args.dump_fd:
        cfg = SelectionConfig(s["lambda"], s["levels"], s["window"])
        for r, img in zip(rows, imgs):
            an = SubbandAnalyzer(img, None, s["window"], max(s["levels"], 1))
            path, _ = bbs_fd(img, cfg=cfg, analyzer=an)
            leaf = path.bands
            if args.dump_subband:
                _dump(args.dump_subband, r["filename"], rescale_to_uint8(an.coeffs(leaf)))
            if args.dump_fd:
                _dump(args.dump_fd, r["filename"], fd_to_gray(an.fd_map(leaf)))
    return {"rows": len(rows), "columns": X.shape[1], "errors": len(errors),
            "config_hash": h}


def cmd_select(args):
    s = _settings(args, ["threshold"])
    fm = FeatureMatrix.from_csv(args.features)
    sel = DivergenceSelector(s["threshold"]).fit(fm.X, fm.labels)
    conf = {"stage": "select", "features_sha256": _sha(args.features), **s}
    h = config_hash(conf)
    out = fm.select(sel.selected_)
    out.meta = dict(fm.meta, select={"config": conf, "config_hash": h})
    out.meta["config_hash"] = h
    out.to_csv(args.out)
    report = {
        "config": conf, "config_hash": h,
        "ranking": [{"index": i, "name": fm.names[i], "divergence": d}
                    for i, d in sel.ranking_.entries],
        "kept": [fm.names[i] for i in sel.selected_],
        "dropped": [fm.names[i] for i in range(len(fm.names))
                    if i not in set(sel.selected_)],
        "degenerate": [fm.names[i] for i in sel.ranking_.degenerate],
    }
    if args.report:
        _write(args.report, json.dumps(report, indent=1, sort_keys=True) + "\n")
    return {"kept": len(sel.selected_), "of": len(fm.names), "config_hash": h}


def _clf_settings(args):
    return _settings(args, ["classifier", "seed", "folds", "grid_c", "grid_gamma",
                            "bag_members"])


def _make_clf(s):
    return make_classifier(s["classifier"], s["seed"], parse_grid(s["grid_c"]),
                           parse_grid(s["grid_gamma"]), s["folds"],
                           bag_members=s["bag_members"])


def _clf_kw(s):
    return {"C_grid": parse_grid(s["grid_c"]), "gamma_grid": parse_grid(s["grid_gamma"]),
            "folds": s["folds"], "bag_members": s["bag_members"]}


def cmd_train(args):
    s = _clf_settings(args)
    fm = FeatureMatrix.from_csv(args.features)
    conf = {"stage": "train", "features_sha256": _sha(args.features), **s}
    h = config_hash(conf)
    model = _make_clf(s).fit(fm.X, np.asarray(fm.labels))
    save_model(args.out, model, {"config": conf, "config_hash": h,
                                 "feature_names": fm.names})
    info = {"config_hash": h, "classes": [str(c) for c in model.classes_]}
    if hasattr(model, "n_support_"):
        info["n_support"] = model.n_support_
    return info


def cmd_predict(args):
    model = load_model(args.model)
    fm = FeatureMatrix.from_csv(args.features)
    pred = model.predict(fm.X)
    lines = ["image,predicted,label"] + [f"{i},{p},{t}" for i, p, t in
                                         zip(fm.images, pred, fm.labels)]
    _write(args.out, "\n".join(lines) + "\n")
    return {"rows": len(pred), "accuracy": float(np.mean(pred == np.asarray(fm.labels)))}


def _emit_report(out_dir, stem, cm, report, conf):
    os.makedirs(out_dir, exist_ok=True)
    h = config_hash(conf)
    _write(os.path.join(out_dir, f"{stem}.json"), report_json(report, conf))
    _write(os.path.join(out_dir, f"{stem}.txt"),
           f"config_hash: {h}\n" + report_text(report))
    _write(os.path.join(out_dir, f"{stem}_confusion.csv"),
           f"# config_hash: {h}\n" + cm.to_csv())
    return h


def cmd_evaluate(args):
    cs = _clf_settings(args)
    out = {}
    if args.brodatz:
        s = _settings(args, ["method", "lambda", "levels"])
        conf = {"stage": "evaluate", "mode": "holdout", **s, **cs}
        cm, rep = brodatz_holdout(args.brodatz, cs["classifier"], s["method"],
                                  seed=cs["seed"], lam=s["lambda"],
                                  max_levels=s["levels"])
        out["holdout"] = {"accuracy": rep["overall_accuracy"],
                          "config_hash": _emit_report(args.out_dir, "metrics", cm, rep,
                                                      conf)}
        return out
    reports = {}
    if args.features:
        for k, path in enumerate(args.features):
            fm = FeatureMatrix.from_csv(path)
            conf = {"stage": "evaluate", "features_sha256": _sha(path),
                    "select": bool(args.select), **cs}
            cm, rep, _ = run_lopo(fm, cs["classifier"], bool(args.select), cs["seed"],
                                  **_clf_kw(cs))
            stem = "metrics" if len(args.features) == 1 else f"metrics_{k}"
            reports[stem] = (rep, _emit_report(args.out_dir, stem, cm, rep, conf))
    else:
        if not args.input:
            raise ParameterError("evaluate needs --input, --features or --brodatz")
        s = _settings(args, ["channel", "se_size", "method", "lambda", "levels",
                             "window", "deform_cells", "shear"])
        imgs, rows, _, digest = _load_dataset(args.input, s, deform=True)
        labels = [r["label"] for r in rows]
        patients = [r["patient"] for r in rows]
        methods = [m.strip() for m in s["method"].split(",")]
        fd_depths = None
        if "bbs_fd" in methods and len(methods) > 1:
            # baselines walk as deep as the fractal walk went on each image
            methods = ["bbs_fd"] + [m for m in methods if m != "bbs_fd"]
        for m in methods:
            conf = {"stage": "evaluate", "manifest_sha256": digest,
                    "select": bool(args.select), "matched_depth": fd_depths is not None,
                    **dict(s, method=m), **cs}
            cache = WalkCache(imgs, m, s["lambda"], s["levels"], window=s["window"],
                              depths=fd_depths)
            if m == "bbs_fd" and len(methods) > 1:
                fd_depths = [p.depth for p in cache.paths]
            cm, rep, _ = lopo_images(cache, labels, patients, cs["classifier"],
                                     bool(args.select), cs["seed"], **_clf_kw(cs))
            stem = "metrics" if len(methods) == 1 else f"metrics_{m}"
            reports[stem] = (rep, _emit_report(args.out_dir, stem, cm, rep, conf))
    summary = {k: {"accuracy": r["overall_accuracy"], "config_hash": h}
               for k, (r, h) in reports.items()}
    if len(reports) == 2:
        (ka, (ra, ha)), (kb, (rb, hb)) = sorted(reports.items())
        cmp_ = {"a": ka, "b": kb, "config_hashes": [ha, hb],
                "wilcoxon": compare_reports(ra, rb)}
        _write(os.path.join(args.out_dir, "comparison.json"),
               json.dumps(cmp_, indent=1, sort_keys=True) + "\n")
        summary["wilcoxon"] = cmp_["wilcoxon"]
    return summary


def cmd_sweep(args):
    s = _settings(args, ["channel", "se_size", "method", "lambda", "levels", "window"])
    cs = _clf_settings(args)
    imgs, rows, _, digest = _load_dataset(args.input, s)
    conf = {"stage": "sweep", "manifest_sha256": digest, **s, **cs}
    res = sweep_levels(imgs, [r["label"] for r in rows], [r["patient"] for r in rows],
                       s["method"], cs["classifier"], s["levels"], s["lambda"],
                       cs["seed"], s["window"], **_clf_kw(cs))
    _write(args.out, report_json(res, conf))
    return {"per_level": res["per_level"], "config_hash": config_hash(conf)}


def cmd_deform(args):
    s = _settings(args, ["deform_cells", "shear", "seed", "n_deform"])
    manifest = os.path.join(args.input, MANIFEST)
    rows = read_manifest(manifest)
    if not rows:
        raise DataError("no input rows")
    conf = {"stage": "deform", "manifest_sha256": _sha(manifest), **s}
    h = config_hash(conf)
    os.makedirs(args.out, exist_ok=True)
    shear = _floats(s["shear"])
    out_rows = []
    for k, r in enumerate(rows):
        raw = read_image(os.path.join(args.input, r["filename"]))
        if s["deform_cells"]:
            cells = _ints(s["deform_cells"])
        else:
            cells = random_cells(np.random.default_rng([s["seed"], k]), s["n_deform"])
        if raw.ndim == 3:
            img = np.stack([shear_deform(raw[:, :, c], cells, shear) for c in range(3)],
                           axis=2)
            name = os.path.splitext(r["filename"])[0] + ".ppm"
        else:
            img = shear_deform(raw, cells, shear)
            name = os.path.splitext(r["filename"])[0] + ".pgm"
        write_image(os.path.join(args.out, name), img)
        out_rows.append(dict(r, filename=name, cells=" ".join(map(str, cells)),
                             config_hash=h))
    write_manifest(os.path.join(args.out, MANIFEST), out_rows)
    return {"images": len(out_rows), "config_hash": h}


# ------------------------------------------------------------------ parser

def _add_prep(p):
    p.add_argument("--channel", choices=["r", "g", "b", "gray"], type=str.lower)
    p.add_argument("--se-size", dest="se_size", type=int)
    p.add_argument("--deform-cells", dest="deform_cells")
    p.add_argument("--shear")
    p.add_argument("--window", type=int)


def _add_basis(p):
    p.add_argument("--method")
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--levels", type=int)


def _add_clf(p):
    p.add_argument("--classifier", choices=["svm", "nbc", "knn"])
    p.add_argument("--grid-c", dest="grid_c")
    p.add_argument("--grid-gamma", dest="grid_gamma")
    p.add_argument("--bag-members", dest="bag_members", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    ap = _Parser(prog="fractex", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int)
    p.add_argument("--images", type=int, help="images per patient")
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="best-basis features of a manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paths-dir", dest="paths_dir")
    p.add_argument("--dump-subband", dest="dump_subband")
    p.add_argument("--dump-fd", dest="dump_fd")
    _add_prep(p)
    _add_basis(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select", help="divergence ranking and correlation pruning")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="fit a classifier on a features CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    _add_clf(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a features CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="leave-one-patient-out or hold-out evaluation")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="image directory with manifest.csv")
    src.add_argument("--features", nargs="+", help="one or two features CSVs")
    src.add_argument("--brodatz", help="directory of texture images")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--select", action="store_true", default=None)
    _add_prep(p)
    _add_basis(p)
    _add_clf(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy per forced decomposition depth")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_prep(p)
    _add_basis(p)
    _add_clf(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("deform", help="shear lattice cells of every image")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--deform-cells", dest="deform_cells")
    p.add_argument("--n-deform", dest="n_deform", type=int,
                   help="random cells per image when --deform-cells is absent")
    p.add_argument("--shear")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_deform)

    for p in sub.choices.values():
        p.add_argument("--config", help="JSON file of settings; flags override it")
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        result = args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    except CliError as exc:
        sys.stderr.write(json.dumps({"error": "UsageError", "message": str(exc)}) + "\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error JSON
        sys.stderr.write(json.dumps({"error": type(exc).__name__,
                                     "message": str(exc)}) + "\n")
        return 1
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
