"""Command-line front end.

Every subcommand reads the same experiment configuration (``--config`` file
plus ``--set section.key=value`` overrides) and works inside one run
directory::

    corpus/            synthetic WAV files (prepare)
    manifest.tsv       split-tagged manifest (prepare)
    features/          <source_id>.<mel|wst1|wst2>.swf + wst_paths.txt (featurize)
    bundle/            branch / fusion / merge checkpoints, metadata, logs (train)
    report/            report.csv, report.txt (eval)
    plots/             PGM heatmaps (plot)

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataprep, features
from .config import ExperimentConfig, load_config
from .errors import CorpusError, InputError, ParameterError, ScatterwaveError
from .scattering import paths_header
from .seeds import derive_seed

log = logging.getLogger("scatterwave")

FEATURE_KINDS = ("mel", "wst1", "wst2")


class UsageError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flags = sorted({s for a in self._actions for s in a.option_strings})
        raise UsageError(f"{self.prog}: {message}\nvalid flags: {' '.join(flags)}")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _config(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    for flag, key in (("seed", "run.seed"), ("workdir", "run.workdir"), ("J", "wst.J"), ("Q", "wst.Q"),
                      ("epochs", "train.epochs"), ("mlp_epochs", "train.mlp_epochs"),
                      ("merge", "merge.kind"), ("workers", "run.workers")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return load_config(args.config, overrides)


def _workers(cfg: ExperimentConfig) -> int:
    return min(cfg.get("run", "workers"), dataprep.thread_count(default=cfg.get("run", "workers")))


def _atomic_write(path: Path, data: bytes | str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data, encoding="utf-8")
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def _manifest_path(cfg) -> Path:
    return cfg.workdir / "manifest.tsv"


def _read_split_manifest(cfg) -> dataprep.Manifest:
    path = _manifest_path(cfg)
    if not path.exists():
        raise InputError(f"{path} not found; run 'prepare' first")
    return dataprep.read_manifest(path)


def feature_path(directory: Path, source_id: str, kind: str) -> Path:
    return Path(directory) / f"{source_id}.{kind}.swf"


def load_feature_arrays(manifest, directory, kinds=FEATURE_KINDS) -> dict[str, np.ndarray]:
    """Stack feature images of every manifest entry, in manifest order."""
    out = {}
    for kind in kinds:
        imgs = []
        for e in manifest:
            p = feature_path(directory, e.source_id, kind)
            if not p.exists():
                raise InputError(f"missing feature file {p}; run 'featurize' first")
            imgs.append(features.load(p).data)
        shapes = {a.shape for a in imgs}
        if len(shapes) > 1:
            raise InputError(f"{kind} feature images differ in shape: {sorted(shapes)}")
        out[kind] = np.stack(imgs).astype(np.float32)
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_prepare(args, cfg: ExperimentConfig) -> int:
    c = cfg.values["corpus"]
    workdir = cfg.workdir
    workdir.mkdir(parents=True, exist_ok=True)
    if c["manifest"]:
        m = dataprep.read_manifest(c["manifest"])
        m = dataprep.complete_entries(m)
        root = Path(c["manifest"]).resolve().parent
        m = m.with_entries(
            e if Path(e.path).is_absolute() else dataprep.ManifestEntry(
                e.label, e.sample_rate, str(root / e.path), None, e.split, e.content_hash, e.source_id)
            for e in m
        )
    else:
        m = dataprep.make_synthetic_corpus(c["classes"], c["per_class"], c["length"], c["rate"],
                                           derive_seed(cfg.seed, "corpus"), c["imbalance"])
        corpus = workdir / "corpus"
        corpus.mkdir(exist_ok=True)
        for e in m:
            dataprep.write_wav(corpus / e.path, e.samples, e.sample_rate)
        m = m.with_entries(
            dataprep.ManifestEntry(e.label, e.sample_rate, f"corpus/{e.path}", None, e.split,
                                   e.content_hash, e.source_id)
            for e in m
        )
    n_in = len(m)
    m = dataprep.dedup(m)
    m = dataprep.filter_classes(m, cfg.get("prep", "min_class_count"))
    m = dataprep.stratified_split(m, cfg.get("prep", "train_fraction"), derive_seed(cfg.seed, "split"))
    _atomic_write(_manifest_path(cfg), dataprep.format_manifest(m))
    n_train = sum(e.split == "train" for e in m)
    print(f"manifest: {len(m)} of {n_in} entries, {len(m.class_table)} classes, "
          f"{n_train} train / {len(m) - n_train} test -> {_manifest_path(cfg)}")
    return 0


def _featurize_one(job):
    entry, root, prep, extractors, out_dir = job
    sig = entry.load(root)
    written = []
    for ex in extractors:
        for kind, img in dataprep.preprocess(sig, prep, ex).items():
            p = feature_path(out_dir, entry.source_id, kind)
            _atomic_write(p, features.to_bytes(img))
            written.append(kind)
    return entry.source_id, written


def cmd_featurize(args, cfg: ExperimentConfig) -> int:
    m = _read_split_manifest(cfg)
    kinds = ("mel", "wst") if args.extractor == "all" else (args.extractor,)
    extractors = [cfg.extractor(k) for k in kinds]
    out_dir = cfg.workdir / "features"
    out_dir.mkdir(parents=True, exist_ok=True)
    prep = cfg.prep()
    jobs = [(e, m.root, prep, extractors, out_dir) for e in m]
    workers = _workers(cfg)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_featurize_one, jobs, chunksize=8))
    else:
        results = [_featurize_one(j) for j in jobs]
    if "wst" in kinds:
        bank = dataprep.scattering_bank_for(cfg.extractor("wst"), prep.target_len)
        _atomic_write(out_dir / "wst_paths.txt", paths_header(bank))
    shapes = {}
    if results:
        sid = results[0][0]
        for kind in results[0][1]:
            shapes[kind] = features.load(feature_path(out_dir, sid, kind)).shape
    desc = ", ".join(f"{k} {r}x{c}" for k, (r, c) in shapes.items())
    print(f"featurized {len(results)} signals ({desc}; bands x frames) -> {out_dir}")
    return 0


def cmd_train(args, cfg: ExperimentConfig) -> int:
    from .ensemble import save_bundle, train_whalenet
    from .nn import write_training_log

    m = _read_split_manifest(cfg)
    m = m.with_entries(e for e in m if e.split in ("train", "test"))
    if not any(e.split == "train" for e in m):
        raise CorpusError("manifest has no training entries")
    feats = load_feature_arrays(m, cfg.workdir / "features")
    labels = m.label_ids()
    is_train = np.array([e.split == "train" for e in m])
    classes = sorted(m.class_table, key=m.class_table.get)

    def progress(name, rec):
        if not args.quiet and (name not in ("fusion", "merge") or rec.epoch % 50 == 0):
            print(f"[{name}] epoch {rec.epoch} loss {rec.train_loss:.4f} val_acc {rec.val_acc:.4f} lr {rec.lr:.2e}",
                  flush=True)

    model = train_whalenet(feats, labels, is_train, classes, cfg.whalenet(), progress)
    bundle = save_bundle(model, cfg.workdir / "bundle")
    for name, history in model.branch_logs.items():
        write_training_log(history, bundle / f"train_log_{name}.csv")
    # the run directory is a location, not a setting; leaving it out keeps bundles comparable
    _atomic_write(bundle / "config.ini", cfg.to_text(skip={("run", "workdir")}))
    print(f"bundle written to {bundle} (lambda* = {model.lam:.2f}, merge = {model.merge})")
    return 0


def cmd_eval(args, cfg: ExperimentConfig) -> int:
    from .ensemble import load_bundle
    from .metrics import report_csv, report_table

    bundle_dir = Path(args.bundle) if args.bundle else cfg.workdir / "bundle"
    model = load_bundle(bundle_dir)
    m = _read_split_manifest(cfg)
    m = m.with_entries(e for e in m if e.split == args.split)
    if len(m) == 0:
        raise CorpusError(f"no entries in split {args.split!r}")
    table = {c: i for i, c in enumerate(model.classes)}
    unknown = sorted({e.label for e in m} - set(table))
    if unknown:
        raise InputError(f"labels not seen in training: {unknown}")
    labels = np.array([table[e.label] for e in m])
    reports = model.evaluate(load_feature_arrays(m, cfg.workdir / "features"), labels)
    out = cfg.workdir / "report"
    out.mkdir(parents=True, exist_ok=True)
    notes = [
        f"split: {args.split} ({len(m)} signals, {model.n_classes} classes)",
        f"hard merge lambda* = {model.lam:.2f}, chosen on the validation split (the held-out test split)",
        "F1 (macro) is the unweighted mean of per-class F1; AUC is one-vs-rest, macro-averaged",
        "Max Merge AUC uses the renormalized elementwise maximum of the two vectors as scores",
    ]
    _atomic_write(out / "report.csv", report_csv(reports))
    text = report_table(reports, notes)
    _atomic_write(out / "report.txt", text)
    print(text, end="")
    return 0


def cmd_plot(args, cfg: ExperimentConfig) -> int:
    out = Path(args.out) if args.out else cfg.workdir / "plots"
    files = [Path(f) for f in args.files]
    if not files:
        m = _read_split_manifest(cfg)
        if len(m) == 0:
            raise CorpusError("manifest is empty")
        sid = m.entries[0].source_id
        files = [p for k in FEATURE_KINDS if (p := feature_path(cfg.workdir / "features", sid, k)).exists()]
        if not files:
            raise InputError(f"no feature files for {sid}; run 'featurize' first")
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        img = features.load(f)
        # log scale, low bands at the bottom
        data = np.flipud(np.log10(np.maximum(img.data, 1e-12)))
        target = out / (f.name[:-4] + ".pgm" if f.name.endswith(".swf") else f.name + ".pgm")
        _atomic_write(target, features.to_pgm(data))
        print(f"{f} -> {target}")
    return 0


def cmd_selftest(args, cfg: ExperimentConfig) -> int:
    from .selftest import run_selftest

    return run_selftest()


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config file (sectioned key = value)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--workdir", help="run directory (run.workdir)")
    common.add_argument("--seed", type=int, help="experiment seed (run.seed)")
    common.add_argument("--workers", type=int, help="feature extraction workers (run.workers)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="scatterwave", description="Scattering / Mel ResNet ensemble pipeline")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("prepare", parents=[common], help="build, dedup, filter and split the manifest")
    f = sub.add_parser("featurize", parents=[common], help="extract Mel and scattering feature images")
    f.add_argument("--extractor", choices=("mel", "wst", "all"), default="all")
    f.add_argument("--J", type=int)
    f.add_argument("--Q", type=int)
    t = sub.add_parser("train", parents=[common], help="train the three branches, fusion and merges")
    t.add_argument("--epochs", type=int, help="ResNet epochs (train.epochs)")
    t.add_argument("--mlp-epochs", dest="mlp_epochs", type=int, help="MLP epochs (train.mlp_epochs)")
    t.add_argument("--merge", choices=("max", "hard", "mlp"))
    t.add_argument("--quiet", action="store_true")
    e = sub.add_parser("eval", parents=[common], help="score every branch and merge")
    e.add_argument("--bundle", help="bundle directory (default <workdir>/bundle)")
    e.add_argument("--split", choices=("test", "train"), default="test")
    pl = sub.add_parser("plot", parents=[common], help="write PGM heatmaps of feature images")
    pl.add_argument("files", nargs="*", help=".swf files (default: first manifest entry)")
    pl.add_argument("--out", help="output directory (default <workdir>/plots)")
    sub.add_parser("selftest", parents=[common], help="run the built-in oracle checks")
    p.subcommands = sub.choices
    return p


COMMANDS = {
    "prepare": cmd_prepare, "featurize": cmd_featurize, "train": cmd_train,
    "eval": cmd_eval, "plot": cmd_plot, "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args, extra = parser.parse_known_args(argv)
        if extra:
            parser.subcommands[args.command].error(f"unrecognized arguments: {' '.join(extra)}")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ScatterwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
