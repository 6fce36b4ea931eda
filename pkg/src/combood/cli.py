"""Command-line entry point: fit / score / eval / bench / sweep / synth."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, metrics, synth
from .detector import ComboodDetector
from .mahalanobis import RegularizedMahalanobis
from .transform import PowerTransform

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DEFAULT_C_GRID = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e6)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1 (2 is for data errors)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _open_fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return value


def _holdout_fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {text}")
    return value


def _c_values(text: str) -> list[float]:
    values = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    if not values:
        raise argparse.ArgumentTypeError("need at least one value")
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"regularization values must be >= 0, got {text}")
    return values


def build_parser() -> _Parser:
    parser = _Parser(prog="combood", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase stderr chatter")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--reg-c", type=_nonneg_float, default=1.0,
                       help="covariance diagonal regularization (default 1)")
        p.add_argument("--k", type=_positive_int, default=50,
                       help="neighbor index of the nonparametric component (default 50)")
        p.add_argument("--target-tpr", type=_open_fraction, default=0.95,
                       help="ID true-positive rate targeted by calibration (default 0.95)")
        p.add_argument("--clamp-eps", type=float, default=1e-12,
                       help="floor applied to the neighbor distance before its log")

    p_fit = sub.add_parser("fit", help="fit a detector and write a .combood archive")
    p_fit.add_argument("--train-extrema", required=True, help="extrema feature matrix (.npy/.csv)")
    p_fit.add_argument("--train-embed", required=True, help="embedding feature matrix (.npy/.csv)")
    p_fit.add_argument("--out", required=True, help="output .combood path")
    add_config_flags(p_fit)
    p_fit.add_argument("--calibrate-split", type=_holdout_fraction, default=0.1,
                       help="fraction of training rows (by trailing index, jointly from both "
                            "matrices) held out to calibrate the threshold; 0 disables (default 0.1)")

    p_score = sub.add_parser("score", help="score paired test matrices with a saved detector")
    p_score.add_argument("--detector", required=True, help=".combood archive")
    p_score.add_argument("--test-extrema", required=True)
    p_score.add_argument("--test-embed", required=True)
    p_score.add_argument("--out", required=True, help="output scores CSV")
    p_score.add_argument("--threads", type=_positive_int, default=None,
                         help="scoring threads (default: COMBOOD_THREADS or all cores)")

    p_eval = sub.add_parser("eval", help="detection metrics from two score CSVs")
    p_eval.add_argument("--id-scores", required=True, help="scores CSV of ID samples")
    p_eval.add_argument("--ood-scores", required=True, help="scores CSV of OOD samples")
    p_eval.add_argument("--out", required=True, help="output JSON report")
    p_eval.add_argument("--target-tpr", type=_open_fraction, default=0.95,
                        help="TPR at which the false-positive rate is reported")

    p_bench = sub.add_parser("bench", help="per-sample inference-time statistics")
    p_bench.add_argument("--detector", required=True)
    p_bench.add_argument("--test-extrema", required=True)
    p_bench.add_argument("--test-embed", required=True)
    p_bench.add_argument("--out", required=True, help="output JSON")
    p_bench.add_argument("--repeats", type=_positive_int, default=1)
    p_bench.add_argument("--serial-components", action="store_true",
                         help="account component times serially instead of max()")

    p_sweep = sub.add_parser("sweep", help="AUROC of the parametric component across reg values")
    p_sweep.add_argument("--train-extrema", required=True)
    p_sweep.add_argument("--id-extrema", required=True, help="ID test extrema matrix")
    p_sweep.add_argument("--ood-extrema", required=True, help="OOD test extrema matrix")
    p_sweep.add_argument("--out", required=True, help="output CSV (c,auroc)")
    p_sweep.add_argument("--c-values", type=_c_values, default=list(DEFAULT_C_GRID),
                         help="comma-separated regularization values (default "
                              "0,0.01,0.1,1,10,100,1e6)")

    p_synth = sub.add_parser("synth", help="generate a seeded synthetic scenario")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--dim-extrema", type=_positive_int, default=8)
    p_synth.add_argument("--dim-embed", type=_positive_int, default=16)
    p_synth.add_argument("--n-train", type=_positive_int, default=2000)
    p_synth.add_argument("--n-id-test", type=_positive_int, default=2000)
    p_synth.add_argument("--n-ood-test", type=_positive_int, default=2000)
    p_synth.add_argument("--shift", type=float, default=8.0,
                         help="OOD mean shift along the first axis")
    p_synth.add_argument("--cov-scale", type=float, default=1.0,
                         help="OOD covariance multiplier")
    p_synth.add_argument("--seed", type=int, default=0)

    return parser


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}
    print(f"combood {args.command}: config {json.dumps(resolved, default=str)}", file=sys.stderr)


def _resolve_threads(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("COMBOOD_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"COMBOOD_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValueError(f"COMBOOD_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def _write_scores_csv(path, triples: np.ndarray, ids, decisions) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["id", "kc", "mc", "score"]
        if decisions is not None:
            header.append("decision")
        writer.writerow(header)
        for i in range(triples.shape[0]):
            row = [ids[i]] + [repr(float(v)) for v in triples[i]]
            if decisions is not None:
                row.append(decisions[i])
            writer.writerow(row)


def _read_scores_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "score" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a scores CSV with a 'score' column")
        try:
            scores = [float(row["score"]) for row in reader]
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed score value ({exc})") from exc
    if not scores:
        raise ValueError(f"{path}: no score rows")
    return np.asarray(scores)


def cmd_fit(args) -> int:
    extrema = dataio.load_matrix(args.train_extrema)
    embed = dataio.load_matrix(args.train_embed)
    holdout = 0
    if args.calibrate_split > 0:
        if extrema.rows != embed.rows:
            raise ValueError(
                f"--calibrate-split holds out rows jointly by index and needs equal row "
                f"counts, got {extrema.rows} and {embed.rows}; pass --calibrate-split 0 "
                "to fit without calibration"
            )
        holdout = int(extrema.rows * args.calibrate_split)
    det = ComboodDetector(reg_c=args.reg_c, k=args.k, target_tpr=args.target_tpr,
                          clamp_eps=args.clamp_eps)
    if holdout > 0:
        split = extrema.rows - holdout
        det.fit(extrema.values[:split], embed.values[:split])
        val = det.score_samples(extrema.values[split:], embed.values[split:])
        try:
            det.calibrate_threshold(val[:, 2])
        except ValueError as exc:
            raise ValueError(
                f"{exc}; increase --calibrate-split or provide more training rows"
            ) from exc
    else:
        det.fit(extrema.values, embed.values)
    dataio.save_detector(dataio.DetectorArchive.from_detector(det), args.out)
    print(
        f"fitted detector: extrema dim {det.maha_.dim_}, embedding dim {det.n_embed_}, "
        f"reg_c={args.reg_c}, k={args.k}, "
        f"threshold={'unset' if det.threshold_ is None else repr(det.threshold_)} -> {args.out}"
    )
    return EXIT_OK


def cmd_score(args) -> int:
    det = dataio.load_detector(args.detector).to_detector()
    extrema = dataio.load_matrix(args.test_extrema)
    embed = dataio.load_matrix(args.test_embed)
    if extrema.rows != embed.rows:
        raise ValueError(
            f"paired scoring needs equal row counts, got {extrema.rows} extrema rows "
            f"and {embed.rows} embedding rows"
        )
    triples = det.score_samples(extrema.values, embed.values, n_threads=_resolve_threads(args))
    ids = extrema.ids if extrema.ids is not None else [str(i) for i in range(extrema.rows)]
    if det.threshold_ is None:
        print("warning: detector is uncalibrated; omitting the decision column", file=sys.stderr)
        decisions = None
    else:
        decisions = np.where(triples[:, 2] >= det.threshold_, "ID", "OOD")
    _write_scores_csv(args.out, triples, ids, decisions)
    print(f"scored {extrema.rows} samples -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    id_scores = _read_scores_csv(args.id_scores)
    ood_scores = _read_scores_csv(args.ood_scores)
    report = metrics.evaluate(id_scores, ood_scores, tpr=args.target_tpr)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_bench(args) -> int:
    det = dataio.load_detector(args.detector).to_detector()
    extrema = dataio.load_matrix(args.test_extrema)
    embed = dataio.load_matrix(args.test_embed)
    report = metrics.bench_inference(
        det, extrema.values, embed.values, repeats=args.repeats,
        parallel_components=not args.serial_components,
    )
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    train = dataio.load_matrix(args.train_extrema)
    id_test = dataio.load_matrix(args.id_extrema)
    ood_test = dataio.load_matrix(args.ood_extrema)
    transform = PowerTransform().fit(train.values)
    train_t = transform.transform(train.values)
    id_t = transform.transform(id_test.values)
    ood_t = transform.transform(ood_test.values)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["c", "auroc"])
        for c in args.c_values:
            maha = RegularizedMahalanobis(reg_c=c).fit(train_t)
            value = metrics.auroc(maha.score_samples(id_t), maha.score_samples(ood_t))
            writer.writerow([repr(float(c)), repr(value)])
            if args.verbose:
                print(f"sweep: C={c} auroc={value:.6f}", file=sys.stderr)
    print(f"swept {len(args.c_values)} regularization values -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = synth.ScenarioSpec(
        dim_extrema=args.dim_extrema,
        dim_embed=args.dim_embed,
        n_train=args.n_train,
        n_id_test=args.n_id_test,
        n_ood_test=args.n_ood_test,
        ood_mean_shift=args.shift,
        ood_cov_scale=args.cov_scale,
        seed=args.seed,
    )
    scenario = synth.generate(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in ("train_extrema", "train_embed", "id_extrema", "id_embed",
                 "ood_extrema", "ood_embed"):
        path = out_dir / f"{name}.npy"
        dataio.save_matrix(getattr(scenario, name), path)
        files[name] = path.name
    manifest = {"spec": spec.to_dict(), "files": files, "format": "npy"}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote scenario (seed {spec.seed}) to {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "fit": cmd_fit,
    "score": cmd_score,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _echo_config(args)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"combood {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
