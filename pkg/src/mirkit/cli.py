"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 input parse error, 4 numerical or
precondition error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, augment, dataset, formats, metrics, spectral, trainer
from .audio_io import downmix_to_mono, load_wav, save_wav
from .errors import InputParseError, MirkitError, PreconditionError, UsageError

log = logging.getLogger("mirkit")


def _provenance(argv, seed=None) -> dict:
    return {"tool_version": __version__, "invocation": list(argv), "seed": seed}


def _write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_matrix(matrix, path) -> None:
    if str(path).lower().endswith(".csv"):
        formats.write_matrix_csv(matrix, path)
    else:
        formats.write_matrix_binary(matrix, path)


# --- spectrogram ---------------------------------------------------------------

def cmd_spectrogram(args, argv) -> int:
    kind = args.kind
    conflicts = []
    if kind != "mel" and args.n_mels is not None:
        conflicts.append("--n-mels only applies to --kind mel")
    if kind != "cqt" and (args.bins_per_octave is not None or args.n_bins is not None):
        conflicts.append("--bins-per-octave/--n-bins only apply to --kind cqt")
    if kind == "cqt" and args.n_fft is not None:
        conflicts.append("--n-fft does not apply to --kind cqt")
    if kind == "stft" and args.fmin is not None:
        conflicts.append("--fmin does not apply to --kind stft")
    if conflicts:
        raise UsageError("; ".join(conflicts))

    audio = downmix_to_mono(load_wav(args.input))
    n_fft = args.n_fft or 2048
    hop = args.hop if args.hop is not None else (512 if kind == "cqt" else n_fft // 4)
    if kind == "stft":
        mat = spectral.magnitude(spectral.stft(audio, n_fft, hop))
        db_kind = "amplitude"
    elif kind == "mel":
        mat = spectral.melspectrogram(audio, audio.sample_rate, n_fft, hop, args.n_mels or 128,
                                      f_min=args.fmin or 0.0)
        db_kind = "power"
    else:
        bpo = args.bins_per_octave or 24
        params = spectral.CqtParams(
            f_min=args.fmin if args.fmin is not None else spectral.CqtParams.f_min,
            bins_per_octave=bpo,
            n_bins=args.n_bins or 7 * bpo,
            hop_length=hop,
        )
        mat = spectral.cqt(audio, audio.sample_rate, params)
        db_kind = "amplitude"

    db = spectral.to_decibels(mat, db_kind, ref=1.0)
    _write_matrix(db.data if args.db else mat.data, args.out)
    if args.pgm:
        Path(args.pgm).write_bytes(formats.db_to_pgm(db.data, 80.0))
    log.info("wrote %s %s", kind, mat.shape)
    return 0


# --- augment -------------------------------------------------------------------

def cmd_augment(args, argv) -> int:
    pipeline = augment.parse_pipeline_spec(Path(args.pipeline).read_text())
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.views is not None:
        overrides["num_views"] = args.views
    if overrides:
        pipeline = pipeline.model_copy(update=overrides)
    audio = downmix_to_mono(load_wav(args.input))
    views = augment.apply_pipeline(pipeline, audio, workers=args.workers)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    for k, view in enumerate(views):
        save_wav(view, out_dir / f"{stem}.view{k}.wav", bit_depth=args.bit_depth)
    return 0


# --- evaluate -------------------------------------------------------------------

def _aligned(truth: formats.ScoreTable, scores: formats.ScoreTable):
    if len(truth.classes) != len(scores.classes):
        raise InputParseError(
            f"class-count mismatch: truth has {len(truth.classes)}, scores has {len(scores.classes)}"
        )
    if set(truth.ids) != set(scores.ids):
        missing = sorted(set(truth.ids) ^ set(scores.ids))
        raise InputParseError(f"id mismatch between truth and scores: {missing[:5]}")
    pos = {item: i for i, item in enumerate(scores.ids)}
    order = [pos[item] for item in truth.ids]
    return truth.values.astype(bool), scores.values[order]


def _auc_entry(t, s) -> dict:
    entry = {}
    for name, fn in (("roc_auc", metrics.roc_auc), ("average_precision", metrics.average_precision)):
        try:
            entry[name] = fn(t, s)
        except PreconditionError as exc:
            entry[name] = None
            entry.setdefault("errors", {})[name] = str(exc)
    return entry


def cmd_evaluate(args, argv) -> int:
    truth_tab = formats.read_score_csv(args.truth)
    score_tab = formats.read_score_csv(args.scores)
    truth, scores = _aligned(truth_tab, score_tab)
    report = _provenance(argv)
    report["pr_auc_method"] = "average_precision_step_sum"
    report["n_items"] = len(truth_tab.ids)

    if args.multilabel:
        report["mode"] = "multilabel"
        per_class = {name: _auc_entry(truth[:, k], scores[:, k]) for k, name in enumerate(truth_tab.classes)}
        report["per_class"] = per_class
        report["macro"] = {}
        for name in ("roc_auc", "average_precision"):
            values = [v[name] for v in per_class.values() if v[name] is not None]
            report["macro"][name] = float(np.mean(values)) if values else None
            report["macro"][f"{name}_classes_used"] = len(values)
    else:
        if truth.shape[1] != 1:
            raise UsageError("binary mode needs exactly one class column; pass --multilabel for more")
        t, s = truth[:, 0], scores[:, 0]
        c = metrics.confusion_counts(t, s >= args.threshold)
        report["mode"] = "binary"
        report["threshold"] = args.threshold
        report["confusion"] = {"tp": c.tp, "fp": c.fp, "fn": c.fn_, "tn": c.tn}
        report["metrics"] = metrics.binary_metrics(c, args.beta).as_dict()
        report.update(_auc_entry(t, s))
    _write_json(report, args.out)
    return 0


# --- aggregate ---------------------------------------------------------------------

def split_chunk_id(chunk_id: str) -> tuple[str, int]:
    """``'<track>#<k>'`` -> (track, k)."""
    track, sep, index = chunk_id.rpartition("#")
    if not sep or not track or not index.isdigit():
        raise InputParseError(f"malformed chunk id {chunk_id!r}; expected '<track>#<k>'")
    return track, int(index)


def cmd_aggregate(args, argv) -> int:
    table = formats.read_score_csv(args.scores)
    groups: dict[str, list[int]] = {}
    for row, chunk_id in enumerate(table.ids):
        track, _ = split_chunk_id(chunk_id)
        groups.setdefault(track, []).append(row)
    out_rows = []
    for track, rows in groups.items():
        result = metrics.aggregate_chunks(table.values[rows], args.method)
        if args.method == "majority":
            onehot = np.zeros(len(table.classes))
            onehot[result] = 1.0
            result = onehot
        out_rows.append(result)
    formats.write_score_csv(formats.ScoreTable(list(groups), table.classes, np.array(out_rows)), args.out)
    return 0


# --- dataset -----------------------------------------------------------------------

def _vocabulary(arg, labels) -> list[str]:
    if arg:
        path = Path(arg)
        if path.exists():
            return [v.strip() for v in path.read_text().splitlines() if v.strip()]
        return [v.strip() for v in arg.split(",") if v.strip()]
    return dataset.GTZAN_GENRES if set(labels) <= set(dataset.GTZAN_GENRES) else sorted(set(labels))


def cmd_dataset_check(args, argv) -> int:
    texts = {}
    for path in args.splits:
        name = Path(path).stem
        if name.endswith("_filtered"):
            name = name[: -len("_filtered")]
        texts[name] = Path(path).read_text()
    labels = [line.strip().split("/")[0] for t in texts.values() for line in t.splitlines() if "/" in line]
    vocab = _vocabulary(args.vocab, labels)
    sidecar = {}
    for path in args.sidecar or []:
        sidecar.update(dataset.parse_sidecar(Path(path).read_text()))
    splits = {
        name: dataset.attach_sidecar(dataset.parse_split_file(text, vocab), sidecar)
        for name, text in texts.items()
    }
    report = _provenance(argv)
    report["dataset_version"] = args.dataset_version
    report["key"] = args.key
    report["leaks"] = [f.as_dict() for f in dataset.check_leakage(splits, args.key)]
    report["divergence"] = dataset.distribution_divergence(splits)
    report["sizes"] = {name: len(m) for name, m in splits.items()}
    if args.out:
        _write_json(report, args.out)
    else:
        sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_dataset_make(args, argv) -> int:
    text = Path(args.manifest).read_text()
    labels = [label for label, _, _ in dataset.parse_sidecar(text).values()]
    manifest = dataset.manifest_from_sidecar(text, _vocabulary(args.vocab, labels))
    try:
        fractions = [float(v) for v in args.fractions.split(",")]
    except ValueError as exc:
        raise UsageError(f"--fractions: {exc}") from exc
    result = dataset.stratified_split(manifest, fractions, args.group_key, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, split in result.as_dict().items():
        (out_dir / f"{name}.txt").write_text(dataset.serialize_split(split))
        (out_dir / f"{name}.tsv").write_text(dataset.serialize_sidecar(split))
    report = _provenance(argv, args.seed)
    report["dataset_version"] = args.dataset_version
    report["sizes"] = {name: len(m) for name, m in result.as_dict().items()}
    report["imbalance"] = result.imbalance
    _write_json(report, out_dir / "split_report.json")
    return 0


# --- train-demo ------------------------------------------------------------------------

def _read_labels(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise InputParseError(f"{path}: no labels")
    header = [h.strip() for h in lines[0].split(",")]
    col = header.index("label") if "label" in header else None
    if col is not None:
        lines = lines[1:]
    else:
        col = len(header) - 1
    try:
        return np.array([int(ln.split(",")[col]) for ln in lines], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise InputParseError(f"{path}: labels must be integer class indices ({exc})") from exc


def _configs(doc: dict, seed) -> tuple[trainer.TrainConfig, trainer.TrainConfig]:
    if "teacher" in doc or "student" in doc:
        t_doc, s_doc = dict(doc.get("teacher", {})), dict(doc.get("student", {}))
    else:
        t_doc, s_doc = dict(doc), dict(doc)
    if seed is not None:
        t_doc["seed"] = s_doc["seed"] = seed
    return trainer.TrainConfig.from_dict(t_doc), trainer.TrainConfig.from_dict(s_doc)


def cmd_train_demo(args, argv) -> int:
    x = formats.read_matrix(args.features).astype(np.float64)
    y = _read_labels(args.labels)
    if len(y) != x.shape[0]:
        raise PreconditionError(f"{x.shape[0]} feature rows but {len(y)} labels")
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    teacher_cfg, student_cfg = _configs(doc, args.seed)

    test = None
    if args.test_features:
        if not args.test_labels:
            raise UsageError("--test-features needs --test-labels")
        test = trainer.LabeledSet(formats.read_matrix(args.test_features), _read_labels(args.test_labels))

    n_classes = int(max(y.max(), test.labels.max() if test is not None else 0)) + 1
    labeled = trainer.LabeledSet(x, y, n_classes)
    metrics_doc = _provenance(argv, student_cfg.seed)
    metrics_doc["mode"] = args.mode
    acc = {}

    if args.mode == "supervised":
        fitted = trainer.fit_supervised(labeled, teacher_cfg)
        model, cfg, trace = fitted.model, teacher_cfg, fitted.loss_trace
        acc["train"] = metrics.accuracy(y, trainer.predict(model, x))
        if test is not None:
            acc["test"] = metrics.accuracy(test.labels, trainer.predict(model, test.features))
    elif args.mode == "noisy-student":
        if not args.unlabeled:
            raise UsageError("--mode noisy-student needs --unlabeled")
        unlabeled = trainer.UnlabeledSet(formats.read_matrix(args.unlabeled))
        res = trainer.noisy_student_train(labeled, unlabeled, teacher_cfg, student_cfg)
        model, cfg, trace = res.student, student_cfg, res.student_trace
        metrics_doc["teacher_loss_trace"] = res.teacher_trace
        for role, m in (("teacher", res.teacher), ("student", res.student)):
            acc[f"{role}_train"] = metrics.accuracy(y, trainer.predict(m, x))
            if test is not None:
                acc[f"{role}_test"] = metrics.accuracy(test.labels, trainer.predict(m, test.features))
    else:
        if test is None:
            raise UsageError("--mode linear-eval needs --test-features and --test-labels")
        res = trainer.linear_evaluation(labeled, test, teacher_cfg)
        model, cfg, trace = res.model, teacher_cfg, res.loss_trace
        acc["train"] = metrics.accuracy(y, trainer.predict(model, x))
        acc["test"] = res.test_accuracy

    trainer.save_checkpoint(model, args.out, cfg)
    metrics_doc["train_loss_trace"] = trace
    metrics_doc["accuracies"] = acc
    metrics_path = args.metrics or str(args.out) + ".metrics.json"
    _write_json(metrics_doc, metrics_path)
    return 0


# --- parser ---------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mirkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrogram", help="STFT, mel or CQT of a WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=["stft", "mel", "cqt"], default="stft")
    p.add_argument("--n-fft", type=int)
    p.add_argument("--hop", type=int, help="default n_fft/4 (stft, mel) or 512 (cqt)")
    p.add_argument("--n-mels", type=int)
    p.add_argument("--bins-per-octave", type=int)
    p.add_argument("--n-bins", type=int)
    p.add_argument("--fmin", type=float)
    p.add_argument("--db", action="store_true", help="write decibels (ref 1.0, floor -100 dB)")
    p.add_argument("--out", required=True, help="F32M matrix, or CSV when the name ends in .csv")
    p.add_argument("--pgm", help="also write an 8-bit PGM image (80 dB range)")
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("augment", help="render augmented views of a WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--pipeline", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bit-depth", type=int, choices=[16, 32], default=32)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="binary or multilabel evaluation report")
    p.add_argument("--truth", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--multilabel", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("aggregate", help="chunk-level scores to track-level scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--method", choices=["mean", "max", "majority"], default="mean")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("dataset", help="split audits and stratified splitting")
    dsub = p.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)
    c = dsub.add_parser("check-split")
    c.add_argument("--splits", nargs="+", required=True)
    c.add_argument("--sidecar", nargs="*")
    c.add_argument("--key", choices=["artist", "group"], default="artist")
    c.add_argument("--vocab", help="comma list or file with one label per line")
    c.add_argument("--dataset-version", default=None)
    c.add_argument("--out")
    c.set_defaults(func=cmd_dataset_check)
    m = dsub.add_parser("make-split")
    m.add_argument("--manifest", required=True, help="TSV: path, label, artist, group")
    m.add_argument("--fractions", default="0.7,0.2,0.1")
    m.add_argument("--group-key", choices=["artist", "group"])
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--vocab")
    m.add_argument("--dataset-version", default=None)
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_dataset_make)

    p = sub.add_parser("train-demo", help="linear classifier protocols on feature matrices")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--unlabeled")
    p.add_argument("--test-features")
    p.add_argument("--test-labels")
    p.add_argument("--mode", choices=["supervised", "noisy-student", "linear-eval"], default="supervised")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_train_demo)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, argv)
    except MirkitError as exc:
        print(f"mirkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"mirkit: error: {exc}", file=sys.stderr)
        return InputParseError.exit_code


if __name__ == "__main__":
    sys.exit(main())
