"""Command-line front end.

Every subcommand writes its outputs under ``--out`` together with a
``manifest.json`` recording the parsed configuration and a SHA-256 of each
output file. ``riskwave replay manifest.json --out DIR`` re-runs it.

Seeds: ``--seed`` drives everything. The synthetic generator uses it
directly; leave-one-out fold i splits and initializes with ``seed + i``;
the regular protocol undersamples and initializes with ``seed`` and picks
its hold-out set with ``seed + 1``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .compress import fit_compressor, save_compressor
from .dataio import (
    Cohort,
    CohortError,
    SpectralEffect,
    generate_synthetic_cohort,
    load_cohort,
    read_expression,
    write_cohort,
)
from .evaluate import (
    EvalProtocol,
    PipelineConfig,
    ProtocolKind,
    classify,
    fit_pipeline,
    leave_one_out,
    regular_split,
    stratified_split,
)
from .neuralnet import model_arrays, model_from_arrays
from .search import SearchSpace, ablation, grid_search
from .survival import Risk, label_cohort
from .wavelet import expand_cohort, MexicanHatParams

log = logging.getLogger("riskwave")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


class Outputs:
    """Tracks files written under one output directory."""

    def __init__(self, root):
        self.root = root
        self.files = []
        os.makedirs(root, exist_ok=True)

    def path(self, name):
        if os.path.isabs(name) or os.path.normpath(name).startswith(".."):
            raise ValueError(f"output name {name!r} escapes the output directory")
        self.files.append(name)
        return os.path.join(self.root, name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def manifest(self, command, config):
        hashes = {}
        for name in sorted(set(self.files)):
            with open(os.path.join(self.root, name), "rb") as fh:
                hashes[name] = hashlib.sha256(fh.read()).hexdigest()
        doc = {
            "tool": "riskwave",
            "version": __version__,
            "command": command,
            "seed": config.get("seed"),
            "config": config,
            "outputs": hashes,
        }
        with open(os.path.join(self.root, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return doc


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# argument groups


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _add_common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of parameter defaults (e.g. best_config.json)")


def _add_inputs(p):
    p.add_argument("--expression", required=True)
    p.add_argument("--clinical", required=True)


def _add_pipeline(p):
    p.add_argument("--window", type=int, default=5, help="wavelet window size T")
    p.add_argument("--rank", type=int, default=7, help="retained singular vectors k")
    p.add_argument("--train-frac", type=float, default=0.8, help="P, training share of each split")
    p.add_argument("--hidden", type=int, default=3, help="hidden units h (h <= k)")
    p.add_argument("--threshold", type=float, default=0.83, help="Th; score > Th means high-risk")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--scale-mode", choices=("multi", "fixed"), default="multi")
    p.add_argument("--fixed-scale", type=float, default=1.0)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--patience", type=int, default=200)
    p.add_argument("--no-standardize", action="store_true")


def _add_protocol(p):
    p.add_argument("--protocol", choices=("loo", "regular"), default="loo")
    p.add_argument("--undersample", type=int, help="high-risk patients kept for regular training")
    p.add_argument("--holdout", type=int, help="evaluation patients set aside for the regular protocol")
    p.add_argument("--jobs", type=int, default=1, help="parallel leave-one-out folds")


def build_parser():
    parser = _Parser(prog="riskwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic cohort")
    _add_common(p)
    p.add_argument("--genes", type=int, default=40)
    p.add_argument("--patients", type=int, default=100)
    p.add_argument("--low-risk-frac", type=float, default=0.17)
    p.add_argument("--censored-frac", type=float, default=0.3)
    p.add_argument("--amplitude", type=float, default=SpectralEffect.amplitude)
    p.add_argument("--width", type=float, default=SpectralEffect.width)
    p.add_argument("--center", type=float, default=SpectralEffect.center)
    p.add_argument("--jitter", type=float, default=SpectralEffect.jitter)
    p.add_argument("--noise-sd", type=float, default=SpectralEffect.noise_sd)
    p.add_argument("--polarity", choices=("fixed", "random"), default=SpectralEffect.polarity)

    p = sub.add_parser("label", help="Kaplan-Meier curve and risk labels")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("featurize", help="dump the wavelet matrix H and its projection")
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)

    p = sub.add_parser("train", help="fit one pipeline on the whole cohort")
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)

    p = sub.add_parser("predict", help="score expression columns with a trained bundle")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--expression", required=True)

    for name, text in (("evaluate", "leave-one-out or undersampled evaluation"),
                       ("pipeline", "label, evaluate and plot in one run")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_inputs(p)
        _add_pipeline(p)
        _add_protocol(p)
        p.add_argument("--no-plot", action="store_true")
        if name == "pipeline":
            p.add_argument("--ablation", action="store_true", help="also run the raw-feature arm")

    p = sub.add_parser("search", help="grid search over T, k, P, h, Th")
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)
    _add_protocol(p)
    p.add_argument("--windows", type=_ints, default=(3, 5, 7))
    p.add_argument("--ranks", type=_ints, default=(3, 5, 7, 9))
    p.add_argument("--train-fracs", type=_floats, default=(0.7, 0.8))
    p.add_argument("--hiddens", type=_ints, help="default: 3..k for each k")
    p.add_argument("--thresholds", type=_floats, default=SearchSpace.Th_values)
    p.add_argument("--objective", choices=("youden", "tpr_at_fpr"), default="youden")
    p.add_argument("--fpr-bound", type=float, default=0.1)
    p.add_argument("--time-budget", type=float, help="seconds allowed per (T, k, P, h)")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------------------
# shared steps


def _pipeline_config(a) -> PipelineConfig:
    return PipelineConfig(
        window=a.window, rank=a.rank, hidden=a.hidden, threshold=a.threshold, sigma=a.sigma,
        scale_mode=a.scale_mode, fixed_scale=a.fixed_scale, learning_rate=a.learning_rate,
        max_epochs=a.max_epochs, patience=a.patience, standardize=not a.no_standardize,
    )


def _labels(cohort: Cohort, out: Outputs, plot=True):
    from .plotting import plot_km_curve

    labels, curve = label_cohort(cohort)
    out.csv(
        "labels.csv", ["patient_id", "label", "basis", "conditional_prob"],
        [
            [p.patient_id, l.value.value, l.basis.value,
             "" if l.conditional_prob is None else _fmt(l.conditional_prob)]
            for p, l in zip(cohort.patients, labels)
        ],
    )
    out.csv("km_curve.csv", ["t_days", "cdf"], [[_fmt(t), _fmt(c)] for t, c in zip(curve.event_times, curve.cdf)])
    if plot:
        plot_km_curve(curve, out.path("km_curve.svg"))
    n_low = sum(l.value is Risk.LOW for l in labels)
    log.info("labels: %d low-risk, %d high-risk", n_low, len(labels) - n_low)
    return labels, curve


def _write_report(report, out: Outputs, plot=True, prefix=""):
    from .plotting import plot_roc

    out.csv(
        f"{prefix}scores.csv", ["patient_id", "score", "true_label"],
        [[pid, _fmt(s), t.value] for pid, s, t in report.per_patient_scores],
    )
    r = report.roc
    out.csv(f"{prefix}roc.csv", ["threshold", "fpr", "tpr"],
            [[_fmt(t), _fmt(f), _fmt(p)] for t, f, p in zip(r.thresholds, r.fpr, r.tpr)])
    if plot:
        plot_roc(r, out.path(f"{prefix}roc.svg"), report.operating_point)
    return {
        "auc": report.auc,
        "threshold": report.threshold,
        "tpr": report.tpr,
        "fpr": report.fpr,
        "n_scored": len(report.scores),
        "skipped_folds": [list(s) for s in report.skipped],
        "skipped_alert": report.skipped_alert,
        "retained_training_ids": report.retained_ids,
    }


def _holdout(labels, n_eval, seed):
    if n_eval is None or not 0 < n_eval < len(labels):
        raise UsageError("--protocol regular needs --holdout N with 0 < N < number of patients")
    y = np.array([l.value.code for l in labels])
    frac = 1.0 - n_eval / len(labels)
    train_idx, eval_idx = stratified_split(y, frac, np.random.default_rng(seed + 1))
    return train_idx, eval_idx


def _evaluate(a, cohort, labels, config, out, prefix=""):
    if a.protocol == "loo":
        protocol = EvalProtocol(ProtocolKind.LEAVE_ONE_OUT, a.train_frac, None, a.seed)
        report = leave_one_out(cohort.expression, labels, config, protocol, cohort.patient_ids, jobs=a.jobs)
    else:
        protocol = EvalProtocol(ProtocolKind.REGULAR_SPLIT, a.train_frac, a.undersample, a.seed)
        tr, ev = _holdout(labels, a.holdout, a.seed)
        ids = cohort.patient_ids
        report = regular_split(
            cohort.expression[:, tr], [labels[j] for j in tr],
            cohort.expression[:, ev], [labels[j] for j in ev],
            config, protocol, [ids[j] for j in tr], [ids[j] for j in ev],
        )
    return protocol, _write_report(report, out, not a.no_plot, prefix)


def _load_config_defaults(parser, argv):
    """Apply ``--config FILE`` values as defaults, then parse for real."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {sorted(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(a, out):
    effect = SpectralEffect(a.amplitude, a.center, a.width, a.jitter, a.noise_sd, a.polarity)
    cohort, truth = generate_synthetic_cohort(
        a.genes, a.patients, a.low_risk_frac, effect, a.seed, a.censored_frac
    )
    write_cohort(cohort, out.path("expression.csv"), out.path("clinical.csv"))
    out.csv("truth.csv", ["patient_id", "true_label"],
            [[p.patient_id, t.value.value] for p, t in zip(cohort.patients, truth)])


def cmd_label(a, out):
    _labels(load_cohort(a.expression, a.clinical), out, not a.no_plot)


def cmd_featurize(a, out):
    cohort = load_cohort(a.expression, a.clinical)
    config = _pipeline_config(a)
    stack = expand_cohort(cohort.expression, config.window, MexicanHatParams(config.sigma),
                          config.scale_mode, config.fixed_scale)
    T = stack.window_size
    row_ids = [f"{g}:w{j + 1}" for g in cohort.gene_ids for j in range(T)]
    out.csv("H.csv", ["row_id", *cohort.patient_ids],
            [[r, *map(_fmt, row)] for r, row in zip(row_ids, stack.coefficients)])
    cf = fit_compressor(stack.coefficients, config.rank, n_genes=cohort.n_genes)
    out.csv("H_compressed.csv", ["component", *cohort.patient_ids],
            [[f"c{i + 1}", *map(_fmt, row)] for i, row in enumerate(cf.features)])
    out.csv("singular_values.csv", ["component", "singular_value"],
            [[f"c{i + 1}", _fmt(s)] for i, s in enumerate(cf.singular_values)])
    save_compressor(cf, out.path("compressor.npz"))


def cmd_train(a, out):
    cohort = load_cohort(a.expression, a.clinical)
    labels, _ = label_cohort(cohort)
    config = _pipeline_config(a)
    fitted = fit_pipeline(cohort.expression, labels, config, a.train_frac, a.seed)
    arrays = model_arrays(fitted.model)
    arrays["pipeline_config"] = np.array(json.dumps(asdict(config)))
    arrays["input_scale"] = fitted.input_scale if fitted.input_scale is not None else np.array([])
    if fitted.compressor is not None:
        cf = fitted.compressor
        arrays.update(basis=cf.basis, singular_values=cf.singular_values, row_means=cf.row_means)
    if fitted.raw_means is not None:
        arrays["raw_means"] = fitted.raw_means
    with open(out.path("model.npz"), "wb") as fh:
        np.savez(fh, **arrays)
    scores = fitted.score(cohort.expression)
    out.csv("train_scores.csv", ["patient_id", "score", "true_label"],
            [[p.patient_id, _fmt(s), l.value.value] for p, s, l in zip(cohort.patients, scores, labels)])


def load_bundle(path):
    """Rebuild a FittedPipeline from ``model.npz``."""
    from .compress import CompressedFeatures
    from .evaluate import FittedPipeline

    with np.load(path) as z:
        config = PipelineConfig(**json.loads(str(z["pipeline_config"])))
        model = model_from_arrays(z)
        scale = z["input_scale"] if z["input_scale"].size else None
        cf = None
        if "basis" in z:
            k = z["basis"].shape[1]
            cf = CompressedFeatures(np.empty((k, 0)), z["basis"], z["singular_values"],
                                    z["row_means"], np.empty((0, k)))
        raw = z["raw_means"] if "raw_means" in z else None
    return FittedPipeline(config, model, cf, raw, scale)


def cmd_predict(a, out):
    fitted = load_bundle(a.model)
    if not os.path.isfile(a.expression):
        raise CohortError(f"expression file not found: {a.expression}")
    _, patient_ids, X = read_expression(a.expression)
    scores = fitted.score(X)
    th = fitted.config.threshold
    out.csv("predictions.csv", ["patient_id", "score", "label"],
            [[pid, _fmt(s), classify(s, th).value.value] for pid, s in zip(patient_ids, scores)])


def cmd_evaluate(a, out):
    cohort = load_cohort(a.expression, a.clinical)
    labels, _ = label_cohort(cohort)
    _, summary = _evaluate(a, cohort, labels, _pipeline_config(a), out)
    out.json("summary.json", summary)
    log.info("AUC %.3f, TPR %.3f, FPR %.3f at Th=%g", summary["auc"], summary["tpr"], summary["fpr"], a.threshold)


def cmd_pipeline(a, out):
    cohort = load_cohort(a.expression, a.clinical)
    labels, curve = _labels(cohort, out, not a.no_plot)
    config = _pipeline_config(a)
    _, summary = _evaluate(a, cohort, labels, config, out)
    summary["n_low_risk"] = sum(l.value is Risk.LOW for l in labels)
    summary["n_patients"] = cohort.n_patients
    if a.ablation:
        from dataclasses import replace

        raw = replace(config, expand=False)
        _, raw_summary = _evaluate(a, cohort, labels, raw, out, prefix="raw_")
        summary["auc_without_expansion"] = raw_summary["auc"]
    out.json("summary.json", summary)
    log.info("AUC %.3f", summary["auc"])


def cmd_search(a, out):
    cohort = load_cohort(a.expression, a.clinical)
    labels, _ = label_cohort(cohort)
    base = _pipeline_config(a)
    space = SearchSpace(a.windows, a.ranks, a.train_fracs, a.hiddens, a.thresholds, a.seed)
    ids = cohort.patient_ids
    if a.protocol == "loo":
        protocol = EvalProtocol(ProtocolKind.LEAVE_ONE_OUT, a.train_frac, None, a.seed)
        X, labs, pids, eval_set = cohort.expression, labels, ids, None
    else:
        protocol = EvalProtocol(ProtocolKind.REGULAR_SPLIT, a.train_frac, a.undersample, a.seed)
        tr, ev = _holdout(labels, a.holdout, a.seed)
        X, labs, pids = cohort.expression[:, tr], [labels[j] for j in tr], [ids[j] for j in tr]
        eval_set = (cohort.expression[:, ev], [labels[j] for j in ev], [ids[j] for j in ev])
    result = grid_search(X, labs, space, protocol, base, pids, eval_set,
                         a.objective, a.fpr_bound, a.time_budget, a.jobs)
    out.csv(
        "leaderboard.csv", ["T", "k", "P", "h", "Th", "tpr", "fpr", "auc", "youden", "status"],
        [[r.T, r.k, r.P, r.h, r.Th, _fmt(r.tpr), _fmt(r.fpr), _fmt(r.auc), _fmt(r.youden), r.status]
         for r in result.rows()],
    )
    T, k, P, h, th = result.best
    out.json("best_config.json", {"window": T, "rank": k, "train_frac": P, "hidden": h, "threshold": th})
    log.info("best T=%s k=%s P=%s h=%s Th=%s", T, k, P, h, th)


COMMANDS = {
    "simulate": cmd_simulate,
    "label": cmd_label,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "search": cmd_search,
}


def _recorded_config(args):
    skip = {"out", "command", "verbose", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _replay_argv(manifest_path, out):
    with open(manifest_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[doc["command"]]
    argv = [doc["command"], "--out", out]
    for action in sub._actions:
        if action.dest not in doc["config"] or not action.option_strings:
            continue
        value = doc["config"][action.dest]
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is None:
            continue
        elif isinstance(value, list):
            argv += [flag, ",".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _load_config_defaults(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "replay":
            return run(_replay_argv(args.manifest, args.out))
        out = Outputs(args.out)
        COMMANDS[args.command](args, out)
        out.manifest(args.command, _recorded_config(args))
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except (CohortError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
