"""Command-line entry point: ``train``, ``retrain``, ``detect``, ``synth``, ``solve``.

Exit codes: 0 ran, 1 input/config/artifact failure, 2 findings present with
``--fail-on-findings``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .artifact import (
    BIVARIATE_COLUMNS,
    UNIVARIATE_COLUMNS,
    ModelArtifact,
    bivariate_rows,
    load_train_config,
    univariate_rows,
)
from .bivariate import RegionLabel
from .ecod import Kind
from .errors import LpAnomalyError
from .lp_core import read_problem, solve
from .plan_store import read_case, read_history_dir, write_cases
from .synth import default_scenario, generate_cases, inject, load_injections, load_scenario

log = logging.getLogger("lpanomaly")

EXIT_OK, EXIT_ERROR, EXIT_FINDINGS = 0, 1, 2


def _write_table(path: Path, header, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _print_summary(art: ModelArtifact) -> None:
    s = art.summary
    print(f"artifact {art.artifact_id}  cases={len(art.cases)}  trained_at={art.trained_at or '-'}")
    print(f"variables: {s['variables']} total, {s['variables_eligible']} eligible")
    print(
        f"pairs: {s['pairs_pre_filter']} pre-filter, {s['pairs_post_tree']} post-tree, "
        f"{s['pairs_post_threshold']} post-K, {s['pairs_fitted']} fitted"
    )


def cmd_train(args) -> int:
    config = load_train_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        config.mvs = replace(config.mvs, seed=args.seed)
    history = read_history_dir(args.history)
    art = ModelArtifact.train(history, config, trained_at=args.timestamp)
    art.save(args.out)
    _print_summary(art)
    return EXIT_OK


def cmd_retrain(args) -> int:
    prev = ModelArtifact.load(args.model)
    history = read_history_dir(args.history)
    art = ModelArtifact.train(history, prev.config, trained_at=args.timestamp, parent_id=prev.artifact_id)
    art.save(args.out)
    _print_summary(art)
    print(f"parent {prev.artifact_id}")
    return EXIT_OK


def cmd_detect(args) -> int:
    art = ModelArtifact.load(args.model)
    case = read_case(args.case)
    uni, bi = art.detect(case, args.mvs_level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = f"case={case.case_id} artifact={art.artifact_id} seed={art.config.mvs.seed} mvs_level={args.mvs_level!r}"
    _write_table(out / "univariate.csv", UNIVARIATE_COLUMNS, univariate_rows(uni), header)
    _write_table(out / "bivariate.csv", BIVARIATE_COLUMNS, bivariate_rows(bi), header)
    kinds = Counter(f.kind.value for f in uni)
    labels = Counter(f.label.value for f in bi)
    summary = [("univariate", k.value, str(kinds.get(k.value, 0))) for k in Kind]
    summary += [
        ("bivariate", lab.value, str(labels.get(lab.value, 0)))
        for lab in RegionLabel if lab is not RegionLabel.NonAnomalous
    ]
    _write_table(out / "summary.csv", ("detector", "kind", "count"), summary, header)
    if args.plots:
        from .plotting import render_report_figures

        models = {(m.x_var, m.y_var): m for m in art.pairs}
        render_report_figures(out / "figures", uni, bi, models, args.mvs_level)
    print(
        f"{case.case_id}: {kinds.get('AA', 0)} AA, {kinds.get('A', 0)} A; "
        + ", ".join(f"{lab.value}={labels.get(lab.value, 0)}" for lab in RegionLabel if lab is not RegionLabel.NonAnomalous)
    )
    severe = kinds.get("AA", 0) + labels.get("Significant", 0)
    return EXIT_FINDINGS if args.fail_on_findings and severe else EXIT_OK


def cmd_synth(args) -> int:
    cfg = default_scenario() if args.scenario == "default" else load_scenario(args.scenario)
    if args.n is not None:
        cfg.n_cases = args.n
    if args.seed is not None:
        cfg.seed = args.seed
    cases = generate_cases(cfg)
    out = Path(args.out)
    (out / "history").mkdir(parents=True, exist_ok=True)
    (out / "cases").mkdir(exist_ok=True)
    write_cases(cases, out / "history" / "history.csv")
    for pc in cases:
        write_cases([pc], out / "cases" / f"{pc.case_id}.csv")
    if args.inject:
        from .plan_store import HistoryMatrix

        history = HistoryMatrix.from_cases(cases)
        (out / "injected").mkdir(exist_ok=True)
        truths = []
        for k, (spec, base) in enumerate(load_injections(args.inject), start=1):
            if not 0 <= base < len(cases):
                raise LpAnomalyError(f"injection {k}: base_case {base} out of range")
            new, truth = inject(cases[base], spec, history, case_id=f"inj{k:03d}-{cases[base].case_id}")
            write_cases([new], out / "injected" / f"{new.case_id}.csv")
            truths.append(truth.to_dict())
        (out / "ground_truth.json").write_text(json.dumps(truths, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(cases)} cases (seed {cfg.seed}) to {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    p = read_problem(args.problem)
    sol = solve(p)
    print(f"status {sol.status.value}")
    if sol.optimal:
        print(f"objective {sol.objective!r}")
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(("kind", "name", "value", "marginal"))
        for j, name in enumerate(p.col_names):
            w.writerow(("column", name, repr(float(sol.x[j])), repr(float(sol.dj[j]))))
        for i, name in enumerate(p.row_names):
            w.writerow(("row", name, repr(float(p.A[i] @ sol.x)), repr(float(sol.y[i]))))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpanomaly", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model artifact on a history directory")
    p.add_argument("--history", required=True, help="directory of long-format *.csv tables")
    p.add_argument("--config", help="training config JSON (default: packaged config)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the Monte-Carlo seed")
    p.add_argument("--timestamp", help="value recorded as trained_at (default: last training period)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrain", help="full refit with a previous artifact's configuration")
    p.add_argument("--model", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timestamp")
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("detect", help="score one plan case against an artifact")
    p.add_argument("--model", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--fail-on-findings", action="store_true", help="exit 2 on any AA or Significant finding")
    p.add_argument("--mvs-level", type=float, default=0.01)
    p.add_argument("--plots", action="store_true", help="also render PNG figures under OUT/figures")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="generate a synthetic plan history")
    p.add_argument("--scenario", required=True, help="scenario JSON, or 'default'")
    p.add_argument("--out", required=True)
    p.add_argument("--inject", help="JSON list of injections")
    p.add_argument("--n", type=int, help="override the number of cases")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="solve an LP problem file and print primal/dual values")
    p.add_argument("--problem", required=True)
    p.set_defaults(func=cmd_solve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (LpAnomalyError, OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
