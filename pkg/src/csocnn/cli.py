"""csocnn command line: train, optimize, evaluate, detect.

Every command writes a run manifest (seeds, config snapshot, artifact
inventory, metric values) sufficient to reproduce its metric values
exactly. Artifact plots are SVG derived from sibling CSVs. Exit codes:
0 success, 2 usage, 3 data/model format, 4 numeric failure.
"""

import argparse
import csv
import json
import os
import secrets
import signal
import sys
import time
from pathlib import Path

import numpy as np

from . import cso, data, detector, hyperopt, metrics, nn, svg, trainer
from .errors import (BoundsError, DegenerateClass, FitnessError, LabelError,
                     ModelFormatError, ParseError, ScalerMismatch, SchemaError,
                     ShapeError, StratifyError, TrainingDiverged,
                     UndefinedMetric)
from .model_io import load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4

_FORMAT_ERRORS = (SchemaError, ParseError, StratifyError, ModelFormatError,
                  ScalerMismatch, LabelError, ShapeError)
_NUMERIC_ERRORS = (TrainingDiverged, FitnessError, UndefinedMetric,
                   DegenerateClass, BoundsError)

SCALER_FILENAME = "scaler.json"


def default_out_dir():
    return os.environ.get("CSOCNN_OUT", "csocnn-out")


def _add_data_flags(p):
    p.add_argument("--data", metavar="PATH", help="labeled flow-feature CSV")
    p.add_argument("--synthetic", action="store_true",
                   help="use generated Gaussian blob data instead of a CSV")
    p.add_argument("--synthetic-samples", type=int, default=6000)
    p.add_argument("--synthetic-separation", type=float, default=3.0)
    p.add_argument("--label-column", default="label")


def _add_common_flags(p):
    p.add_argument("--seed", type=int, default=None,
                   help="master seed; omitted -> random, recorded in manifest")
    p.add_argument("--out", default=None,
                   help="output directory (default: $CSOCNN_OUT or ./csocnn-out)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csocnn",
        description="Swarm-tuned compact CNN for network-flow classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier and report")
    _add_data_flags(p_train)
    _add_common_flags(p_train)
    p_train.add_argument("--epochs", type=int, default=5)
    p_train.add_argument("--batch", type=int, default=640)
    p_train.add_argument("--lr", type=float, default=1e-3)

    p_opt = sub.add_parser("optimize", help="swarm-search hyperparameters")
    _add_data_flags(p_opt)
    _add_common_flags(p_opt)
    p_opt.add_argument("--cats", type=int, default=8)
    p_opt.add_argument("--iters", type=int, default=5)
    p_opt.add_argument("--mr", type=float, default=0.3)
    p_opt.add_argument("--smp", type=int, default=5)
    p_opt.add_argument("--srd", type=float, default=0.2)
    p_opt.add_argument("--cdc", type=float, default=0.8)
    p_opt.add_argument("--c1", type=float, default=2.0)
    p_opt.add_argument("--lr-range", type=float, nargs=2, default=(1e-4, 1e-2))
    p_opt.add_argument("--batch-range", type=int, nargs=2, default=(32, 1024))
    p_opt.add_argument("--epoch-range", type=int, nargs=2, default=(1, 5))
    p_opt.add_argument("--workers", type=int, default=None)

    p_eval = sub.add_parser("evaluate", help="score a model on labeled data")
    _add_data_flags(p_eval)
    _add_common_flags(p_eval)
    p_eval.add_argument("--model", required=True, metavar="PATH")
    p_eval.add_argument("--scaler", metavar="PATH",
                        help="scaler stats (default: scaler.json next to model)")

    p_det = sub.add_parser("detect", help="stream anomaly verdicts")
    _add_common_flags(p_det)
    p_det.add_argument("--model", required=True, metavar="PATH")
    p_det.add_argument("--scaler", metavar="PATH")
    p_det.add_argument("--input", metavar="PATH",
                       help="record CSV (default: standard input)")
    p_det.add_argument("--label-column", default="label")
    p_det.add_argument("--threshold", type=float, default=None)
    p_det.add_argument("--calibrate", action="store_true",
                       help="pick the threshold from the labeled input first")
    p_det.add_argument("--score-kind", choices=detector.SCORE_KINDS,
                       default="non_benign_mass")
    p_det.add_argument("--benign-class", default=None,
                       help="benign class name (default: 'Benign' when present)")
    return parser


class RunManifest:
    """Collects the run's reproducibility record and writes manifest.json."""

    def __init__(self, out_dir, command, config, seed, inputs):
        self.out_dir = Path(out_dir)
        self.started = time.time()
        self.payload = {
            "command": command,
            "config": config,
            "seed": seed,
            "inputs": inputs,
            "out_dir": str(self.out_dir),
            "artifacts": [],
            "metrics": {},
            "partial": False,
        }

    def add_artifact(self, path):
        self.payload["artifacts"].append(Path(path).name)
        return path

    def set_metrics(self, values):
        self.payload["metrics"].update(values)

    def write(self, partial=False):
        self.payload["partial"] = partial
        self.payload["duration_s"] = round(time.time() - self.started, 3)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.payload, fh, indent=1, sort_keys=True)
        return path


class _SignalGuard:
    """Finalize the manifest with a partial marker on SIGINT/SIGTERM."""

    def __init__(self, manifest):
        self.manifest = manifest
        self._previous = {}

    def __enter__(self):
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                self._previous[sig] = signal.signal(sig, self._handle)
            except ValueError:  # non-main thread
                pass
        return self

    def _handle(self, signum, frame):
        self.manifest.write(partial=True)
        raise SystemExit(130)

    def __exit__(self, *exc):
        for sig, handler in self._previous.items():
            signal.signal(sig, handler)
        return False


def _resolve_seed(args):
    if args.seed is not None:
        return int(args.seed)
    return secrets.randbits(31)


def _load_records(args, seed):
    if args.data and args.synthetic:
        raise UsageError("--data and --synthetic are mutually exclusive")
    if args.data:
        schema = data.CsvSchema(label_column=args.label_column)
        return data.load_csv(args.data, schema), [args.data]
    if args.synthetic:
        records = data.make_synthetic_blobs(
            args.synthetic_samples, k_classes=5, d=75,
            separation=args.synthetic_separation, seed=seed)
        return records, ["synthetic"]
    raise UsageError("provide --data PATH or --synthetic")


class UsageError(Exception):
    pass


def _config_snapshot(args):
    skip = {"command", "func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _curve_svg(path, state):
    svg.line_chart(
        path, "Training and validation accuracy / loss",
        [
            ("train_acc", state.epochs, state.train_acc),
            ("val_acc", state.epochs, state.val_acc),
            ("train_loss", state.epochs, state.train_loss),
            ("val_loss", state.epochs, state.val_loss),
        ],
        x_label="epoch", y_label="value")
    return path


def cmd_train(args):
    seed = _resolve_seed(args)
    out = Path(args.out or default_out_dir())
    records, inputs = _load_records(args, seed)
    manifest = RunManifest(out, "train", _config_snapshot(args), seed, inputs)
    with _SignalGuard(manifest):
        out.mkdir(parents=True, exist_ok=True)
        prep = data.prepare_dataset(records, data.SplitSpec(seed=seed))
        d_features = prep.train[0].shape[1]
        network = nn.Network(nn.default_architecture(len(prep.codec)),
                             (d_features, 1, 1), seed=seed)
        config = trainer.TrainConfig(
            epochs=args.epochs, batch_size=args.batch, initial_lr=args.lr,
            seed=seed, checkpoint_dir=str(out / "checkpoints"))
        best, state = trainer.train(network, prep.train, prep.val, config,
                                    class_names=prep.codec.classes)

        test_loss, test_acc, predictions, probs = trainer.evaluate(
            best, prep.test)
        best_idx = state.epochs.index(state.best_epoch)
        training_metrics = {
            "training_accuracy": state.train_acc[best_idx],
            "training_loss": state.train_loss[best_idx],
            "validation_accuracy": state.best_val_acc,
            "validation_loss": state.best_val_loss,
        }

        manifest.add_artifact(state.history_to_csv(out / "history.csv"))
        manifest.add_artifact(_curve_svg(out / "curves.svg", state))
        manifest.add_artifact(prep.stats.save(out / SCALER_FILENAME))
        manifest.add_artifact(save_model(
            out / "model.model", best, prep.codec.classes,
            scaler_fingerprint=prep.stats.fingerprint(),
            training_metrics=training_metrics))
        cm = metrics.confusion(prep.test[1], predictions, len(prep.codec),
                               prep.codec.classes)
        manifest.add_artifact(cm.to_csv(out / "confusion_matrix.csv"))
        manifest.set_metrics({
            "test_accuracy": test_acc,
            "test_loss": test_loss,
            "best_val_accuracy": state.best_val_acc,
            "best_val_loss": state.best_val_loss,
            "best_epoch": state.best_epoch,
            "epochs_run": len(state.epochs),
            "stopped_early": state.stopped_early,
            "nan_imputed": prep.n_nan_imputed,
            "inf_imputed": prep.n_inf_imputed,
            "clamped": prep.n_clamped,
        })
        manifest.write()
    return EXIT_OK


def cmd_optimize(args):
    seed = _resolve_seed(args)
    out = Path(args.out or default_out_dir())
    records, inputs = _load_records(args, seed)
    manifest = RunManifest(out, "optimize", _config_snapshot(args), seed, inputs)
    with _SignalGuard(manifest):
        out.mkdir(parents=True, exist_ok=True)
        prep = data.prepare_dataset(records, data.SplitSpec(seed=seed))
        d_features = prep.train[0].shape[1]
        arch = nn.default_architecture(len(prep.codec))
        space = hyperopt.SearchSpace(
            lr_range=tuple(args.lr_range),
            batch_range=tuple(args.batch_range),
            epoch_range=tuple(args.epoch_range))
        swarm_config = cso.SwarmConfig(
            n_cats=args.cats, max_iters=args.iters, mixture_ratio=args.mr,
            smp=args.smp, srd=args.srd, cdc=args.cdc, c1=args.c1, seed=seed,
            objective="maximize", n_workers=args.workers)
        best_hp, best_fit, history = hyperopt.optimize_hyperparams(
            space, (prep.train, prep.val), arch, swarm_config)

        manifest.add_artifact(history.to_csv(out / "convergence.csv"))
        manifest.add_artifact(svg.line_chart(
            out / "convergence.svg", "Swarm convergence",
            [("best_accuracy", history.iterations, history.best_value),
             ("mean_accuracy", history.iterations, history.mean_fitness)],
            x_label="iteration", y_label="validation accuracy"))
        manifest.add_artifact(hyperopt.save_best(
            out / "best_hyperparams.json", best_hp, best_fit))

        # Materialize the winner: retrain at the best hyperparameters.
        network = nn.Network(arch, (d_features, 1, 1), seed=seed)
        config = trainer.TrainConfig(
            epochs=best_hp.epochs, batch_size=best_hp.batch_size,
            initial_lr=best_hp.learning_rate, seed=seed,
            checkpoint_dir=str(out / "checkpoints"))
        best_net, state = trainer.train(network, prep.train, prep.val, config,
                                        class_names=prep.codec.classes)
        best_idx = state.epochs.index(state.best_epoch)
        manifest.add_artifact(prep.stats.save(out / SCALER_FILENAME))
        manifest.add_artifact(save_model(
            out / "model.model", best_net, prep.codec.classes,
            scaler_fingerprint=prep.stats.fingerprint(),
            training_metrics={
                "training_accuracy": state.train_acc[best_idx],
                "training_loss": state.train_loss[best_idx],
                "validation_accuracy": state.best_val_acc,
                "validation_loss": state.best_val_loss,
            }))
        manifest.set_metrics({
            "best_fitness": [best_fit.val_accuracy, best_fit.val_loss],
            "best_learning_rate": best_hp.learning_rate,
            "best_batch_size": best_hp.batch_size,
            "best_epochs": best_hp.epochs,
            "retrain_val_accuracy": state.best_val_acc,
        })
        manifest.write()
    return EXIT_OK


def _load_scaler(args):
    scaler_path = args.scaler
    if scaler_path is None:
        scaler_path = Path(args.model).parent / SCALER_FILENAME
    if not Path(scaler_path).exists():
        raise SchemaError(
            f"scaler stats not found at {scaler_path}; pass --scaler PATH "
            f"(written next to the model at training time)")
    return data.ScalerStats.load(scaler_path), str(scaler_path)


def cmd_evaluate(args):
    seed = _resolve_seed(args)
    out = Path(args.out or default_out_dir())
    bundle = load_model(args.model)
    stats, scaler_path = _load_scaler(args)
    detector.ensure_scaler_match(bundle.scaler_fingerprint, stats)
    records, inputs = _load_records(args, seed)
    manifest = RunManifest(out, "evaluate", _config_snapshot(args), seed,
                           inputs + [args.model, scaler_path])
    with _SignalGuard(manifest):
        out.mkdir(parents=True, exist_ok=True)
        codec = data.LabelCodec(tuple(bundle.class_names))
        scaled = data.clean_and_scale(records, stats)
        batch, labels = data.to_network_input(scaled.records, codec)
        test_loss, test_acc, predictions, probs = trainer.evaluate(
            bundle.network, (batch, labels))

        cm = metrics.confusion(labels, predictions, len(codec), codec.classes)
        report = metrics.class_report(cm, zero_division="zero")
        report_path = out / "classification_report.txt"
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
        manifest.add_artifact(report_path)
        manifest.add_artifact(cm.to_csv(out / "confusion_matrix.csv"))
        manifest.add_artifact(svg.heatmap(
            out / "confusion_matrix.svg", "Confusion matrix",
            cm.counts.tolist(), codec.classes, codec.classes))

        curves = []
        micro_points, micro_auc = metrics.micro_roc_curve(labels, probs)
        curves.append(("micro", micro_points, micro_auc))
        for i, name in enumerate(codec.classes):
            try:
                pts, auc = metrics.roc_curve(labels, probs, i)
            except DegenerateClass:
                continue
            curves.append((name, pts, auc))
        roc_path = out / "roc.csv"
        with open(roc_path, "w", newline="", encoding="utf-8") as fh:
            fh.write("curve,fpr,tpr,threshold\n")
            for name, pts, _ in curves:
                for fpr, tpr, thr in pts:
                    fh.write(f"{name},{fpr!r},{tpr!r},{thr!r}\n")
        manifest.add_artifact(roc_path)
        manifest.add_artifact(svg.line_chart(
            out / "roc.svg", "ROC curves (one-vs-rest and micro-average)",
            [(f"{name} (auc={auc:.3f})",
              [p[0] for p in pts], [p[1] for p in pts])
             for name, pts, auc in curves],
            x_label="false positive rate", y_label="true positive rate"))

        m = metrics.scalar_metrics(cm, zero_division="zero")
        averaged = {
            field_name: {
                "macro": m["macro"][key],
                "weighted": m["weighted"][key],
                "micro": m["micro"][key],
            }
            for field_name, key in (
                ("Precision Score", "precision"),
                ("Recall Score", "recall"),
                ("F1 Score", "f1"),
                ("Sensitivity", "sensitivity"),
                ("Specificity", "specificity"),
                ("PPV", "ppv"),
                ("NPV", "npv"),
            )
        }
        tm = bundle.training_metrics or {}
        record = {
            "Training accuracy": tm.get("training_accuracy"),
            "Validating accuracy": tm.get("validation_accuracy"),
            "Testing accuracy": test_acc,
            **averaged,
            "Kappa Score": m["kappa"],
        }
        record_path = out / "metrics.json"
        with open(record_path, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=1)
        manifest.add_artifact(record_path)
        manifest.set_metrics({
            "test_accuracy": test_acc,
            "test_loss": test_loss,
            "kappa": m["kappa"],
            "micro_auc": micro_auc,
        })
        manifest.write()
    return EXIT_OK


def _read_feature_rows(fh, label_column):
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("record stream is missing its header row") from None
    label_idx = header.index(label_column) if label_column in header else None
    feature_idx = [i for i in range(len(header)) if i != label_idx]
    rows, labels = [], []
    for row_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"stream row {row_number} has {len(row)} fields, expected "
                f"{len(header)}", row_number=row_number)
        values = np.empty(len(feature_idx))
        for k, idx in enumerate(feature_idx):
            try:
                values[k] = float(row[idx])
            except ValueError:
                values[k] = np.nan
        rows.append(values)
        labels.append(row[label_idx].strip() if label_idx is not None else None)
    return rows, labels


def cmd_detect(args):
    seed = _resolve_seed(args)
    out = Path(args.out or default_out_dir())
    bundle = load_model(args.model)
    stats, scaler_path = _load_scaler(args)
    detector.ensure_scaler_match(bundle.scaler_fingerprint, stats)
    manifest = RunManifest(out, "detect", _config_snapshot(args), seed,
                           [args.input or "stdin", args.model, scaler_path])
    with _SignalGuard(manifest):
        if args.input:
            with open(args.input, newline="", encoding="utf-8") as fh:
                rows, labels = _read_feature_rows(fh, args.label_column)
        else:
            rows, labels = _read_feature_rows(sys.stdin, args.label_column)

        class_names = tuple(bundle.class_names)
        benign_name = args.benign_class
        if benign_name is None:
            benign_name = "Benign" if "Benign" in class_names else class_names[0]
        if benign_name not in class_names:
            raise LabelError(f"benign class {benign_name!r} not among "
                             f"model classes {class_names}")
        benign_index = class_names.index(benign_name)

        records = [data.FlowRecord(features=row, label=lbl or "") for row, lbl
                   in zip(rows, labels)]
        scaled = data.clean_and_scale(records, stats) if records else None
        features = (np.stack([r.features for r in scaled.records])
                    if records else np.zeros((0, stats.n_features)))

        threshold = args.threshold
        policy = detector.DetectionPolicy(
            threshold=0.0 if threshold is None else threshold,
            score_kind=args.score_kind,
            benign_class_index=benign_index)
        if args.calibrate:
            if not records or any(l is None for l in labels):
                raise SchemaError(
                    "--calibrate needs labeled records (a label column)")
            codec = data.LabelCodec(class_names)
            y = codec.encode_all(labels)
            threshold = detector.calibrate_threshold(
                bundle.network, (features, y), policy)
            print(f"calibrated threshold: {threshold!r}")
        if threshold is None:
            threshold = 0.5
        policy = detector.DetectionPolicy(
            threshold=threshold, score_kind=args.score_kind,
            benign_class_index=benign_index)

        detections = detector.score_batch(
            bundle.network, features, policy, class_names) if records else []
        writer = csv.writer(sys.stdout)
        writer.writerow(["score", "verdict", "predicted_class"]
                        + [f"p_{c}" for c in class_names])
        n_anomalous = 0
        for det in detections:
            n_anomalous += det.verdict == "anomalous"
            writer.writerow([repr(det.score), det.verdict, det.predicted_class]
                            + [repr(float(p)) for p in det.probabilities])
        manifest.set_metrics({
            "records": len(detections),
            "anomalous": n_anomalous,
            "threshold": threshold,
        })
        manifest.write()
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "detect": cmd_detect,
}


def _error_record(args, exc, code):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    out = getattr(args, "out", None) or default_out_dir()
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
        with open(Path(out) / "error.json", "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=1)
    except OSError:
        pass
    print(f"csocnn: {record['error']}: {record['message']}", file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"csocnn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _FORMAT_ERRORS as exc:
        _error_record(args, exc, EXIT_FORMAT)
        return EXIT_FORMAT
    except _NUMERIC_ERRORS as exc:
        _error_record(args, exc, EXIT_NUMERIC)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
