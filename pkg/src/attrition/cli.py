"""Command-line entry point.

Settings resolve in this order, later winning: built-in defaults, the JSON
file given by ``--config``, then command-line flags. When no seed comes from
either, ``ATTRITION_SEED`` is used, else 0. Every command that writes to
``--out`` also writes the resolved ``config.json`` there.

Exit codes: 0 success, 1 some experiments failed, 2 input/validation error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation, learners, synth
from .errors import AttritionError, InputError, NonConvergenceError
from .ingest import TaskWindow, load_cohort, load_responses
from .pipeline import STANDARDIZE_MODES, StandardizationStats, assemble
from .psychometrics import (
    SubscaleMap,
    alpha_report,
    descriptives,
    fit_cfa,
    item_matrix,
    model_df,
    sample_cov,
)
from .psychometrics.cfa import CfaConfig

log = logging.getLogger("attrition")

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2, 3


@dataclass
class RunConfig:
    responses: str | None = None
    activity: str | None = None
    submissions: str | None = None
    subscale_map: str | None = None
    covariance: str | None = None
    n: int | None = None
    seed: int | None = None
    smote_mode: str = "leakage-safe"
    standardize: str = "all"
    stratify: bool = False
    aggregate: str = "mean"
    model: str | None = None
    target: str | None = None
    out: str = "out"
    logistic: dict = field(default_factory=dict)
    tree: dict = field(default_factory=dict)
    forest: dict = field(default_factory=dict)

    def experiment_config(self):
        return evaluation.ExperimentConfig(
            seed=int(self.seed),
            smote_mode=self.smote_mode,
            standardize=self.standardize,
            stratify=self.stratify,
            aggregate=self.aggregate,
            logistic=learners.LogisticConfig(**self.logistic),
            tree=learners.TreeConfig(**self.tree),
            forest=learners.ForestConfig(**self.forest),
        )

    def subscales(self):
        if self.subscale_map:
            return SubscaleMap.from_json(self.subscale_map)
        return SubscaleMap.default()

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}", path=args.config)
        values.update(data)
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(**values)
    if cfg.seed is None:
        cfg.seed = int(os.environ.get("ATTRITION_SEED", 0))
    if cfg.standardize not in STANDARDIZE_MODES:
        raise InputError(f"--standardize must be one of {STANDARDIZE_MODES}")
    if cfg.smote_mode not in evaluation.SMOTE_MODES:
        raise InputError(f"--smote-mode must be one of {evaluation.SMOTE_MODES}")
    return cfg


def _require(cfg, *names):
    for name in names:
        path = getattr(cfg, name)
        if not path:
            raise InputError(f"--{name} is required")
        if not Path(path).is_file():
            raise InputError("file not found", path=path)


def _write(out_dir, name, text):
    path = Path(out_dir) / name
    path.write_text(text, encoding="utf-8")
    return path


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


# -- validate ----------------------------------------------------------------------


def _read_cov_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        # tolerate a header row
        return np.array([[float(v) for v in r] for r in rows[1:]])


def render_validation(alpha_rows, stats, fit):
    lines = []
    if alpha_rows:
        w = max(len(r.name) for r in alpha_rows)
        lines.append("Internal consistency")
        lines.append(f"{'Subscale'.ljust(w)}  Cronbach's alpha")
        for r in alpha_rows:
            lines.append(f"{r.name.ljust(w)}  {r.alpha:.3f}")
        lines.append("")
    if stats:
        lines.append("Subscale means")
        lines.append(", ".join(s.label() for s in stats))
        lines.append("")
    if fit is not None:
        lines.append("Exact model fit")
        p = "< .001" if fit.p_value < 0.001 else f"{fit.p_value:.3f}"
        lines.append(f"{'chi2':>10}  {'df':>5}  {'chi2/df':>8}  {'p':>7}")
        lines.append(f"{fit.chi2:>10.2f}  {fit.df:>5d}  {fit.chi2_df:>8.3f}  {p:>7}")
        lines.append("")
        lines.append("Fit measures")
        lines.append(f"{'CFI':>7}  {'TLI':>7}  {'RMSEA':>7}  {'90% CI lower':>12}  {'upper':>7}")
        lo, hi = fit.rmsea_ci90
        lines.append(
            f"{fit.cfi:>7.3f}  {fit.tli:>7.3f}  {fit.rmsea:>7.4f}  {lo:>12.4f}  {hi:>7.4f}")
    return "\n".join(lines).rstrip() + "\n"


def cmd_validate(cfg):
    smap = cfg.subscales()
    out = Path(cfg.out)
    alpha_rows, stats = [], []
    if cfg.covariance:
        if not cfg.n:
            raise InputError("--n is required with --covariance")
        S, n = _read_cov_csv(cfg.covariance), int(cfg.n)
    else:
        _require(cfg, "responses")
        responses = load_responses(cfg.responses)
        alpha_rows = alpha_report(responses, smap)
        stats = descriptives(responses, smap)
        x = item_matrix(responses)
        S, n = sample_cov(x), x.shape[0]
    cfg.write(out)
    model, fit = fit_cfa(S, n, smap, CfaConfig())
    text = render_validation(alpha_rows, stats, fit)
    payload = {
        "alpha": [asdict(r) for r in alpha_rows],
        "descriptives": [asdict(s) for s in stats],
        "cfa": {"fit": fit.to_dict(), "model": model.to_dict(), "model_df": model_df(smap.pattern())},
    }
    _write(out, "validation.txt", text)
    _write(out, "validation.json", _dump(payload))
    sys.stdout.write(text)
    return EXIT_OK


# -- pipeline and stages ----------------------------------------------------------------


def _cohort(cfg):
    _require(cfg, "responses", "activity", "submissions")
    return load_cohort(cfg.responses, cfg.activity, cfg.submissions)


def _targets(cfg):
    if cfg.target:
        return [evaluation.parse_target(cfg.target)]
    return list(evaluation.TARGETS.values())


def _models(cfg):
    if cfg.model:
        if cfg.model not in evaluation.MODEL_KINDS:
            raise InputError(f"--model must be one of {evaluation.MODEL_KINDS}")
        return [cfg.model]
    return list(evaluation.MODEL_KINDS)


def cmd_pipeline(cfg):
    cohort, summary = _cohort(cfg)
    out = Path(cfg.out)
    cfg.write(out)
    exp_cfg = cfg.experiment_config()
    report = evaluation.run_all(cohort, exp_cfg, cfg.subscales(), _targets(cfg), _models(cfg))
    payload = report.to_dict()
    payload["merge"] = {"kept": summary.kept, "dropped": summary.dropped}
    _write(out, "report.json", _dump(payload))
    _write(out, "report.txt", report.to_text())
    _write(out, "predictions.csv", report.predictions_csv())
    sys.stdout.write(report.to_text())
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_features(cfg):
    cohort, _ = _cohort(cfg)
    out = Path(cfg.out)
    cfg.write(out)
    for target in _targets(cfg):
        fm, labels = assemble(cohort, target, cfg.subscales(), cfg.aggregate)
        name = f"features_{evaluation.target_name(target)}.csv"
        fm.write_csv(out / name, labels)
        print(f"wrote {out / name} ({len(fm)} teams)")
    return EXIT_OK


def cmd_train(cfg):
    cohort, _ = _cohort(cfg)
    out = Path(cfg.out)
    cfg.write(out)
    exp_cfg = cfg.experiment_config()
    for target in _targets(cfg):
        for kind in _models(cfg):
            r = evaluation.run_experiment(cohort, target, kind, exp_cfg, cfg.subscales())
            doc = {
                "model": r.model_obj.to_dict(),
                "standardizer": r.standardizer.to_dict(),
                "target": r.target,
                "mode": r.mode,
                "seeds": r.seeds,
                "test_rows": [p["row_id"] for p in r.predictions],
            }
            path = out / f"model_{kind}_{r.target}.json"
            _write(out, path.name, _dump(doc))
            print(f"wrote {path}")
    return EXIT_OK


def cmd_evaluate(cfg):
    """Re-score models saved by ``train`` on their recorded held-out rows."""
    cohort, _ = _cohort(cfg)
    out = Path(cfg.out)
    found = 0
    for target in _targets(cfg):
        fm, labels = assemble(cohort, target, cfg.subscales(), cfg.aggregate)
        for kind in _models(cfg):
            path = out / f"model_{kind}_{evaluation.target_name(target)}.json"
            if not path.is_file():
                continue
            doc = json.loads(path.read_text(encoding="utf-8"))
            if doc["mode"] != "leakage-safe":
                raise InputError("only leakage-safe models can be re-scored; use pipeline",
                                 path=path)
            found += 1
            model = learners.model_from_dict(doc["model"])
            st = doc["standardizer"]
            stats = StandardizationStats(*(np.array(st[k]) for k in ("mean", "sd", "scaled", "constant")))
            m, auc = evaluation.score_saved(model, fm, labels, stats, doc["test_rows"])
            print(f"{kind}/{doc['target']}: AUC-ROC {evaluation.fmt(auc)}, "
                  f"accuracy {evaluation.fmt(m.accuracy)}")
            for c in (0, 1):
                pc = m.per_class[c]
                print(f"  class {c}: precision {evaluation.fmt(pc.precision)}, "
                      f"recall {evaluation.fmt(pc.recall)}, F1 {evaluation.fmt(pc.f1)}")
    if not found:
        raise InputError(f"no saved models in {out}; run train first")
    return EXIT_OK


def cmd_synth(args, cfg):
    out = Path(cfg.out)
    if args.kind == "factor":
        plan = synth.FactorPlan.default(n=args.n_respondents, seed=cfg.seed,
                                        loading=args.loading, smap=cfg.subscales())
        responses = synth.gen_factor_cohort(plan)
        out.mkdir(parents=True, exist_ok=True)
        from .ingest import write_responses

        write_responses(out / "responses.csv", responses)
        (out / "ground_truth.json").write_text(_dump(plan.to_dict()), encoding="utf-8")
    else:
        plan = synth.DropoutPlan(
            n_teams=args.teams, signal=args.signal, label_noise=args.noise,
            orphan_teams=args.orphans, seed=cfg.seed,
        )
        synth.gen_dropout_cohort(plan, cfg.subscales()).write(out)
    cfg.write(out)
    print(f"wrote synthetic {args.kind} cohort to {out}")
    return EXIT_OK


def cmd_verify(cfg, predictions=None):
    ok = True
    checked = 0
    if cfg.responses:
        from .psychometrics import cronbach_alpha

        smap = cfg.subscales()
        x = item_matrix(load_responses(cfg.responses))
        for name in smap.names:
            sub = x[:, smap.columns(name)]
            a, b = cronbach_alpha(sub), synth.oracle_alpha(sub.tolist())
            good = abs(a - b) < 1e-10
            ok &= good
            checked += 1
            print(f"{'PASS' if good else 'FAIL'} alpha[{name}] primary={a:.12f} oracle={b:.12f}")
    if predictions:
        groups = defaultdict(lambda: ([], []))
        with open(predictions, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                y, s = groups[(row["model"], row["target"])]
                y.append(int(row["y_true"]))
                s.append(float(row["score"]))
        for (model, target), (y, s) in sorted(groups.items()):
            a, b = evaluation.auc_roc(y, s), synth.oracle_auc(y, s)
            good = a == b
            ok &= good
            checked += 1
            print(f"{'PASS' if good else 'FAIL'} auc[{model}/{target}] primary={a!r} oracle={b!r}")
    if not checked:
        raise InputError("verify needs --responses and/or --predictions")
    return EXIT_OK if ok else EXIT_INPUT


# -- argument parsing ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="attrition", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config")
        p.add_argument("--responses")
        p.add_argument("--activity")
        p.add_argument("--submissions")
        p.add_argument("--subscale-map", dest="subscale_map")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--smote-mode", dest="smote_mode", choices=evaluation.SMOTE_MODES)
        p.add_argument("--standardize", choices=STANDARDIZE_MODES)
        p.add_argument("--stratify", action="store_true", default=None)
        p.add_argument("--aggregate", choices=("mean", "max", "min"))
        p.add_argument("--model", choices=evaluation.MODEL_KINDS)
        p.add_argument("--target", choices=list(evaluation.TARGETS))
        return p

    v = common(sub.add_parser("validate", help="alpha, descriptives and CFA fit"))
    v.add_argument("--covariance", help="24x24 covariance CSV instead of responses")
    v.add_argument("--n", type=int, help="sample size for --covariance")
    common(sub.add_parser("pipeline", help="all targets x models, full report"))
    common(sub.add_parser("features", help="write per-target feature matrices"))
    common(sub.add_parser("train", help="train and save models"))
    common(sub.add_parser("evaluate", help="evaluate models on the held-out split"))
    s = common(sub.add_parser("synth", help="generate a synthetic cohort"))
    s.add_argument("--kind", choices=("dropout", "factor"), default="dropout")
    s.add_argument("--teams", type=int, default=1290)
    s.add_argument("--signal", type=float, default=synth.DropoutPlan.signal)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--orphans", type=int, default=0)
    s.add_argument("--n-respondents", dest="n_respondents", type=int, default=2000)
    s.add_argument("--loading", type=float, default=0.75)
    ver = common(sub.add_parser("verify", help="check primary routines against oracles"))
    ver.add_argument("--predictions", help="predictions.csv from a pipeline run")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "pipeline":
            return cmd_pipeline(cfg)
        if args.command == "features":
            return cmd_features(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "synth":
            return cmd_synth(args, cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.predictions)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (AttritionError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
