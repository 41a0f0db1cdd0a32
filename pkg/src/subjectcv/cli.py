"""Command-line entry point: plan, audit, score, compare, advise, simulate, report.

Exit codes: 0 success (clean or warnings), 2 usage/parameter errors,
3 input-data errors (parse/validation/fingerprint), 4 leaking audit verdict.
"""

from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
from pathlib import Path

from . import analysis, audit, metrics, partition, synthlab
from .errors import (
    InsufficientSubjects,
    InvalidParams,
    SubjectCVError,
    TooFewSubjects,
)
from .manifest import read_manifest, write_manifest
from .partition import PlanParams, Scheme

DEFAULT_SEED = 83136297

_SCHEME_NAMES = {
    "kfold": Scheme.KFOLD_SAMPLE,
    "lnso": Scheme.LNSO,
    "loso": Scheme.LOSO,
    "nlnso": Scheme.NLNSO,
    "nloso": Scheme.NLOSO,
    "bias-nested": Scheme.BIAS_NESTED,
}

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_LEAKING = 4


def _params_from_args(args) -> PlanParams:
    base = _SCHEME_NAMES[args.base_scheme] if getattr(args, "base_scheme", None) else None
    return PlanParams(
        n_folds=args.folds,
        n_outer=args.outer,
        n_inner=args.inner,
        n_repetitions=args.repetitions,
        heldout_fraction=args.heldout_fraction,
        base_scheme=base,
    )


def _cmd_plan(args) -> int:
    m = read_manifest(args.manifest)
    scheme = _SCHEME_NAMES[args.scheme]
    p = partition.plan(m, scheme, _params_from_args(args), args.seed)
    partition.write_plan(p, m, args.out)
    print(f"{len(p.splits)} splits")
    return EXIT_OK


def _cmd_audit(args) -> int:
    m = read_manifest(args.manifest)
    p = partition.read_plan(args.plan, m)
    report = audit.audit_plan(m, p, early_stop_split=args.early_stop)
    findings = list(report.findings)
    if args.logs:
        pred_report = audit.audit_predictions(m, p, metrics.read_logs(args.logs, m))
        findings.extend(pred_report.findings)
    combined = audit.AuditReport(findings=tuple(findings))
    if args.out:
        if args.format == "tabular":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["kind", "severity", "split_id", "detail"])
            for f in combined.findings:
                w.writerow([f.kind.value, f.severity.value, f.split_id or "", f.detail])
            Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        else:
            Path(args.out).write_text(audit.report_to_json(combined), encoding="utf-8")
    for f in combined.findings:
        where = f" [{f.split_id}]" if f.split_id else ""
        print(f"{f.severity.value.upper()} {f.kind.value}{where}: {f.detail}")
    print(f"verdict: {combined.verdict}")
    return EXIT_LEAKING if combined.verdict == "leaking" else EXIT_OK


def _cmd_score(args) -> int:
    m = read_manifest(args.manifest)
    p = partition.read_plan(args.plan, m)
    logs = metrics.read_logs(args.logs, m)
    report = metrics.score_report(m, p, logs)
    fmt = "csv" if args.format == "tabular" else "json"
    metrics.write_report(report, args.out, fmt=fmt)
    stats = metrics.summarize(report.values())
    print(
        f"{len(report.rows)} splits scored; balanced accuracy median "
        f"{stats.median:.4f} [{stats.q25:.4f}-{stats.q75:.4f}]"
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    tabular = args.format == "tabular"
    if args.kind == "cv":
        a = metrics.read_report(args.a)
        b = metrics.read_report(args.b)
        cmp = analysis.compare_cv(a, b, metric=args.metric)
        out = analysis.comparison_to_csv(cmp) if tabular else analysis.to_json(analysis.comparison_to_dict(cmp))
        print(
            f"{cmp.scheme_a} vs {cmp.scheme_b}: median delta {cmp.median_delta:+.4f}, "
            f"IQR delta {cmp.iqr_delta:+.4f}"
        )
    elif args.kind == "duel":
        duel = analysis.subject_duel(
            metrics.read_report(args.a), metrics.read_report(args.b), metric=args.metric
        )
        out = analysis.duel_to_csv(duel) if tabular else analysis.to_json(analysis.duel_to_dict(duel))
        iqr_part = (
            f", IQR change {duel.iqr_pct_change:+.2f}%" if duel.iqr_pct_change is not None else ""
        )
        print(
            f"nested wins {duel.win_count}/{duel.n_subjects}; median change "
            f"{duel.median_pct_change:+.2f}%{iqr_part}"
        )
    elif args.kind == "nested":
        m = read_manifest(args.manifest)
        plain_plan = partition.read_plan(args.plan_a, m)
        nested_plan = partition.read_plan(args.plan_b, m)
        alignment = partition.align_outer(plain_plan, nested_plan)
        pairs = analysis.paired_nested_values(
            metrics.read_report(args.a),
            metrics.read_report(args.b),
            alignment,
            metric=args.metric,
            median_per_outer=args.median_per_outer,
        )
        fit = analysis.regress_nested(pairs)
        out = analysis.regression_to_csv(fit) if tabular else analysis.to_json(analysis.regression_to_dict(fit))
        print(f"slope {fit.slope:.4f}, intercept {fit.intercept:.4f}, adj R2 {fit.r2_adj:.4f}")
    elif args.kind == "bias":
        m = read_manifest(args.manifest)
        p = partition.read_plan(args.plan, m)
        logs = metrics.read_logs(args.logs, m)
        eval_logs = [log for log in logs if log.role in ("val", "test")]
        heldout_logs = [log for log in logs if log.role == "heldout"]
        bias = analysis.estimate_bias(m, p, eval_logs, heldout_logs)
        out = analysis.bias_to_csv(bias) if tabular else analysis.to_json(analysis.bias_to_dict(bias))
        print(f"{bias.scheme} bias mean {bias.mean:+.4f} +/- {bias.std:.4f} over {bias.n} runs")
    else:  # pragma: no cover - argparse restricts choices
        raise InvalidParams(f"unknown compare kind {args.kind!r}")
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    return EXIT_OK


def _cmd_advise(args) -> int:
    advice = analysis.advise(args.subjects)
    if advice.scheme == Scheme.NLOSO:
        desc = "full N-LOSO"
    elif advice.params.n_outer == args.subjects:
        desc = "LOSO-outer/10-inner nested CV"
    else:
        desc = f"{advice.params.n_outer}-outer/{advice.params.n_inner}-inner N-LNSO"
    print(f"{desc}, {advice.training_instance_count} instances")
    print(advice.rationale)
    if args.out:
        Path(args.out).write_text(analysis.to_json(analysis.advice_to_dict(advice)), encoding="utf-8")
    return EXIT_OK


PRESETS = {
    "leakage-demo": synthlab.SynthConfig(
        n_subjects=40,
        classes=("A", "B"),
        windows_per_subject=50,
        feature_dim=16,
        subject_sigma=3.0,
        class_sigma=0.0,
        noise_sigma=1.0,
        label_mode="subject_constant",
    ),
    "bci-demo": synthlab.SynthConfig(
        n_subjects=40,
        classes=("A", "B"),
        windows_per_subject=50,
        feature_dim=16,
        subject_sigma=3.0,
        class_sigma=1.0,
        noise_sigma=1.0,
        label_mode="within_subject",
    ),
}


def _cmd_simulate(args) -> int:
    if args.preset in PRESETS:
        cfg = PRESETS[args.preset]
        bias_mode = False
    elif args.preset == "bias-demo":
        cfg = PRESETS["leakage-demo"]
        bias_mode = True
    else:  # pragma: no cover - argparse restricts choices
        raise InvalidParams(f"unknown preset {args.preset!r}")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = synthlab.generate(cfg, args.seed)
    write_manifest(ds.manifest, out_dir / "manifest.json")
    synthlab.write_features(ds, out_dir / "features.csv")
    hyper = synthlab.TrainHyper()

    if bias_mode:
        reports = {}
        for name, base in (("kfold", Scheme.KFOLD_SAMPLE), ("lnso", Scheme.LNSO)):
            params = PlanParams(
                n_folds=10, n_repetitions=10, heldout_fraction=0.1, base_scheme=base
            )
            p = partition.plan(ds.manifest, Scheme.BIAS_NESTED, params, args.seed)
            partition.write_plan(p, ds.manifest, out_dir / f"plan_bias_{name}.json")
            eval_logs, heldout_logs = synthlab.run_bias_study(ds, p, hyper)
            metrics.write_logs(eval_logs + heldout_logs, out_dir / f"logs_bias_{name}.csv")
            bias = analysis.estimate_bias(ds.manifest, p, eval_logs, heldout_logs)
            (out_dir / f"bias_{name}.json").write_text(
                analysis.to_json(analysis.bias_to_dict(bias)), encoding="utf-8"
            )
            reports[name] = bias
            print(f"{name} bias mean {reports[name].mean:+.4f} +/- {reports[name].std:.4f}")
        return EXIT_OK

    scheme_reports = {}
    for name, scheme in (("kfold", Scheme.KFOLD_SAMPLE), ("lnso", Scheme.LNSO)):
        p = partition.plan(ds.manifest, scheme, PlanParams(n_folds=10), args.seed)
        partition.write_plan(p, ds.manifest, out_dir / f"plan_{name}.json")
        logs = synthlab.run_study(ds, p, hyper)
        metrics.write_logs(logs, out_dir / f"logs_{name}.csv")
        report = metrics.score_report(ds.manifest, p, logs)
        metrics.write_report(report, out_dir / f"report_{name}.json", fmt="json")
        metrics.write_report(report, out_dir / f"report_{name}.csv", fmt="csv")
        scheme_reports[name] = report
        stats = metrics.summarize(report.values())
        print(f"{name}: balanced accuracy median {stats.median:.4f} [{stats.q25:.4f}-{stats.q75:.4f}]")
    cmp = analysis.compare_cv(scheme_reports["kfold"], scheme_reports["lnso"])
    (out_dir / "comparison.json").write_text(
        analysis.to_json(analysis.comparison_to_dict(cmp)), encoding="utf-8"
    )
    print(f"median gap (kfold - lnso): {cmp.median_delta:+.4f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows: list[tuple] = []
    if args.kind == "nested-scatter":
        m = read_manifest(args.manifest)
        plain_plan = partition.read_plan(args.plan_a, m)
        nested_plan = partition.read_plan(args.plan_b, m)
        alignment = partition.align_outer(plain_plan, nested_plan)
        plain_report = metrics.read_report(args.a)
        nested_report = metrics.read_report(args.b)
        plain_by_fold = {r.outer_index: r.value(args.metric) for r in plain_report.rows}
        nested_by_outer: dict[int, list[float]] = {}
        for r in nested_report.rows:
            nested_by_outer.setdefault(r.outer_index, []).append(r.value(args.metric))
        for fold, outer in alignment:
            x = plain_by_fold[fold]
            ys = nested_by_outer[outer]
            if args.median_per_outer:
                ys = [float(statistics.median(ys))]
            for y in ys:
                rows.append((repr(x), repr(y), f"outer-{outer}"))
    elif args.kind == "scheme-box":
        for path in args.reports:
            report = metrics.read_report(path)
            for value in report.values(args.metric):
                rows.append((report.scheme, repr(value), report.scheme))
    else:  # pragma: no cover - argparse restricts choices
        raise InvalidParams(f"unknown report kind {args.kind!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "group"])
    w.writerows(rows)
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subjectcv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="materialize a seeded fold plan")
    p_plan.add_argument("--manifest", required=True)
    p_plan.add_argument("--scheme", required=True, choices=sorted(_SCHEME_NAMES))
    p_plan.add_argument("--folds", type=int)
    p_plan.add_argument("--outer", type=int)
    p_plan.add_argument("--inner", type=int)
    p_plan.add_argument("--repetitions", type=int)
    p_plan.add_argument("--heldout-fraction", type=float, dest="heldout_fraction")
    p_plan.add_argument("--base-scheme", choices=sorted(set(_SCHEME_NAMES) - {"bias-nested"}), dest="base_scheme")
    p_plan.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_plan.add_argument("--out", required=True)
    p_plan.set_defaults(func=_cmd_plan)

    p_audit = sub.add_parser("audit", help="audit a plan (and optionally logs) for leakage")
    p_audit.add_argument("--manifest", required=True)
    p_audit.add_argument("--plan", required=True)
    p_audit.add_argument("--early-stop", choices=["val", "test", "none"], default="val", dest="early_stop")
    p_audit.add_argument("--logs")
    p_audit.add_argument("--out")
    p_audit.add_argument("--format", choices=["text", "tabular"], default="text")
    p_audit.set_defaults(func=_cmd_audit)

    p_score = sub.add_parser("score", help="score prediction logs into a metric report")
    p_score.add_argument("--manifest", required=True)
    p_score.add_argument("--plan", required=True)
    p_score.add_argument("--logs", required=True)
    p_score.add_argument("--out", required=True)
    p_score.add_argument("--format", choices=["text", "tabular"], default="text")
    p_score.set_defaults(func=_cmd_score)

    p_cmp = sub.add_parser("compare", help="cross-scheme comparisons")
    p_cmp.add_argument("--kind", required=True, choices=["cv", "duel", "nested", "bias"])
    p_cmp.add_argument("--a")
    p_cmp.add_argument("--b")
    p_cmp.add_argument("--manifest")
    p_cmp.add_argument("--plan")
    p_cmp.add_argument("--plan-a", dest="plan_a")
    p_cmp.add_argument("--plan-b", dest="plan_b")
    p_cmp.add_argument("--logs")
    p_cmp.add_argument("--metric", default="balanced_accuracy")
    p_cmp.add_argument("--median-per-outer", action="store_true", dest="median_per_outer")
    p_cmp.add_argument("--format", choices=["text", "tabular"], default="text")
    p_cmp.add_argument("--out")
    p_cmp.set_defaults(func=_cmd_compare)

    p_adv = sub.add_parser("advise", help="recommend a partitioning for a dataset size")
    p_adv.add_argument("--subjects", type=int, required=True)
    p_adv.add_argument("--out")
    p_adv.set_defaults(func=_cmd_advise)

    p_sim = sub.add_parser("simulate", help="run a synthetic leakage study end-to-end")
    p_sim.add_argument("--preset", required=True, choices=[*sorted(PRESETS), "bias-demo"])
    p_sim.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_sim.add_argument("--out-dir", required=True, dest="out_dir")
    p_sim.set_defaults(func=_cmd_simulate)

    p_rep = sub.add_parser("report", help="emit plot-ready (x, y, group) tuples")
    p_rep.add_argument("--kind", required=True, choices=["nested-scatter", "scheme-box"])
    p_rep.add_argument("--a")
    p_rep.add_argument("--b")
    p_rep.add_argument("--manifest")
    p_rep.add_argument("--plan-a", dest="plan_a")
    p_rep.add_argument("--plan-b", dest="plan_b")
    p_rep.add_argument("--reports", nargs="*", default=[])
    p_rep.add_argument("--metric", default="balanced_accuracy")
    p_rep.add_argument("--median-per-outer", action="store_true", dest="median_per_outer")
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidParams, InsufficientSubjects, TooFewSubjects) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SubjectCVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
