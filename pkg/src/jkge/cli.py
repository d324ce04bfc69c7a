"""Command-line entry point: ``jkge <subcommand> [flags]``.

Exit codes: 0 success, 1 usage/argument error, 2 data or degeneracy error.

Randomness: every subcommand takes one ``--seed``; each consumer derives its
own stream with :func:`derive_seed` using a fixed purpose tag ("synth",
"calibrate", "bootstrap").
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import zlib
from pathlib import Path

import numpy as np

from jkge._io import atomic_open, write_json
from jkge.benchmark import build, parse_method, segment_sigma
from jkge.calibrate import (
    CALIBRATION_METRICS,
    AdamConfig,
    CalibrationSetup,
    multi_seed_calibrate,
)
from jkge.errors import ArgumentError, DegenerateInputError, IngestionError, JKGEError
from jkge.evaluate import (
    GROUP_NAMES,
    bootstrap_metrics,
    flow_duration_curve,
    flow_group_anomalies,
    monthly_percent_bias,
    qq_data,
)
from jkge.gradients import GRADIENT_METRICS, fd_check
from jkge.hydromodel import Forcing, save_params
from jkge.metrics import DEFAULT_EPS_B, DEFAULT_EPS_SIGMA, full_report
from jkge.series import (
    DEFAULT_LOG_FLOOR,
    PairedSeries,
    TimeSeries,
    WaterYearIndex,
    convert_discharge_to_depth,
    load_daily_csv,
    log_transform,
    split_train_eval,
    write_csv,
)
from jkge.synth import SynthConfig, generate_catchment


def derive_seed(seed: int, purpose: str) -> int:
    """Independent 63-bit sub-seed for ``purpose`` under master ``seed``."""
    ss = np.random.SeedSequence([seed, zlib.crc32(purpose.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(f"{self.prog}: {message}")


def _method(text):
    try:
        return parse_method(text)
    except ArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _write_rows(path, header, rows):
    with atomic_open(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else v for v in r])


def _align(obs: TimeSeries, sim: TimeSeries) -> PairedSeries:
    """Restrict both series to their common date range."""
    start = max(obs.start_date, sim.start_date)
    end = min(obs.end_date, sim.end_date)
    if start > end:
        raise DegenerateInputError("obs and sim do not overlap in time")
    n = (end - start).days + 1

    def cut(ts):
        i = (start - ts.start_date).days
        return ts.slice(i, i + n)

    sim = cut(sim)
    return PairedSeries(cut(obs), sim.replace(unit=obs.unit))


def _load_forcing(path) -> Forcing:
    p = load_daily_csv(path, value_column="precip")
    e = load_daily_csv(path, value_column="pet")
    return Forcing(p, e)


def _write_forcing(forcing: Forcing, path):
    with atomic_open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["date", "precip", "pet"])
        for d, p, e in zip(forcing.precip.dates(), forcing.precip.values, forcing.pet.values):
            w.writerow([str(d), repr(float(p)), repr(float(e))])


# -- subcommands -----------------------------------------------------------------

def cmd_convert(a):
    unit = "cfs" if a.area_km2 is not None else "mm_per_day"
    s = load_daily_csv(a.input, a.date_column, a.value_column, unit)
    if a.area_km2 is not None:
        s = convert_discharge_to_depth(s, a.area_km2)
    if a.log:
        s = log_transform(s, a.floor)
    write_csv(s, a.output)


def cmd_benchmark(a):
    s = load_daily_csv(a.input, a.date_column, a.value_column)
    b = build(s, a.method)
    sig = segment_sigma(s, b)
    write_csv(s, a.output, {"benchmark": np.where(b.valid, b.values, np.nan),
                            "sigma": sig.values, "valid": b.valid})


def cmd_evaluate(a):
    obs = load_daily_csv(a.obs, value_column=a.obs_column)
    sim = load_daily_csv(a.sim, value_column=a.sim_column)
    pair = _align(obs, sim)
    out = Path(a.out_dir)
    rep = full_report(pair, a.method, a.eps_b, a.log_space, a.floor, a.eps_sigma)
    write_json(out / "report.json", rep.to_dict())
    _write_rows(out / "fdc.csv", ["exceedance", "obs", "sim"],
                ((p, fo, fs) for (p, fo), (_, fs) in zip(flow_duration_curve(pair.obs.mask(pair.usable)),
                                                          flow_duration_curve(pair.sim.mask(pair.usable)))))
    assign, stats = flow_group_anomalies(pair, a.floor)
    rows = []
    for k, name in enumerate(GROUP_NAMES):
        st = stats[name]
        lo = None if k == 0 else assign.boundaries[k - 1]
        hi = None if k == 4 else assign.boundaries[k]
        vals = [None] * 6 if st is None else [st.count, st.min, st.q25, st.median, st.q75, st.max]
        rows.append([name, lo, hi, *vals])
    _write_rows(out / "flowgroups.csv",
                ["group", "lower", "upper", "count", "min", "q25", "median", "q75", "max"], rows)
    _write_rows(out / "monthly_bias.csv", ["month", "bias_percent", "mean_obs", "n_days"],
                ((m.month, m.bias_percent if np.isfinite(m.bias_percent) else None, m.mean_obs, m.n_days)
                 for m in monthly_percent_bias(pair)))
    _write_rows(out / "qq.csv", ["obs", "sim"], qq_data(pair).tolist())
    if a.bootstrap > 0:
        summary = bootstrap_metrics(pair, a.method, a.bootstrap, derive_seed(a.seed, "bootstrap"),
                                    a.eps_b, a.log_space, a.floor, a.eps_sigma)
        _write_rows(out / "bootstrap.csv", ["metric", "median", "q05", "q95", "skipped"],
                    ([r["metric"], r["median"], r["q05"], r["q95"], r["skipped"]] for r in summary.rows()))
    print(json.dumps({k: rep.get(k) for k in ("nse", "kge_ss", "jkge_ss", "jkge_aug")}))


def _setup(a, metric, method):
    forcing = _load_forcing(a.forcings)
    obs = load_daily_csv(a.obs, value_column=a.obs_column)
    if obs.start_date != forcing.precip.start_date or len(obs) != len(forcing):
        raise DegenerateInputError("obs and forcings must cover the same dates")
    wy = WaterYearIndex.of(obs)
    train, evaluation = split_train_eval(obs, wy, a.train_fraction)
    return CalibrationSetup(metric, forcing, obs, wy.mask_for(train), wy.mask_for(evaluation),
                            method, a.spinup_years), (train, evaluation)


def cmd_calibrate(a):
    setup, (train, evaluation) = _setup(a, a.metric, a.method)
    cfg = AdamConfig(lr=a.lr, epochs=a.epochs, seed=derive_seed(a.seed, "calibrate"))
    res = multi_seed_calibrate(setup, a.seeds, cfg)
    out = Path(a.out_dir)
    payload = res.to_dict()
    payload["train_years"], payload["eval_years"] = list(train), list(evaluation)
    write_json(out / "calibration.json", payload)
    save_params(res.bucket_params, out / "params.json")
    write_csv(setup.simulate(res.params), out / "sim.csv")
    print(json.dumps({"metric": res.metric, "method": res.method,
                      "train": res.train_value, "eval": res.eval_value}))


def cmd_grad_check(a):
    obs = load_daily_csv(a.obs, value_column=a.obs_column)
    sim = load_daily_csv(a.sim, value_column=a.sim_column)
    pair = _align(obs, sim)
    metrics = GRADIENT_METRICS if a.metric == "all" else (a.metric,)
    result = {}
    print(f"{'metric':<10} {'max_rel_err':>12}  status")
    for m in metrics:
        try:
            err = fd_check(m, pair, a.method, a.h, a.eps_b)
        except DegenerateInputError as exc:
            result[m] = {"max_rel_error": None, "passed": False, "reason": str(exc)}
            print(f"{m:<10} {'-':>12}  UNDEFINED ({exc})")
            continue
        ok = err <= a.tol
        result[m] = {"max_rel_error": err, "passed": ok}
        print(f"{m:<10} {err:>12.3e}  {'PASS' if ok else 'FAIL'}")
    if a.out:
        write_json(a.out, {"method": a.method.label, "tol": a.tol, "results": result})


def cmd_synth(a):
    cfg = SynthConfig.from_text(Path(a.config).read_text()) if a.config else SynthConfig()
    overrides = {"seed": derive_seed(a.seed, "synth")}
    if a.years is not None:
        overrides["n_years"] = a.years
    cfg = SynthConfig(**{**cfg.__dict__, **overrides})
    forcing, obs = generate_catchment(cfg)
    out = Path(a.out_dir)
    _write_forcing(forcing, out / "forcings.csv")
    write_csv(obs, out / "obs.csv")
    with atomic_open(out / "synth_config.txt") as fh:
        fh.write(cfg.to_text())


def cmd_experiment(a):
    """Synthesize a catchment, calibrate with KGE_SS and with the chosen
    metric under each benchmark, then cross-evaluate every trained run."""
    out = Path(a.out_dir)
    if (a.forcings is None) != (a.obs is None):
        raise ArgumentError("give both --forcings and --obs, or neither")
    if a.forcings is None:
        cfg = SynthConfig.from_text(Path(a.config).read_text()) if a.config else SynthConfig()
        cfg = SynthConfig(**{**cfg.__dict__, "seed": derive_seed(a.seed, "synth")})
        forcing, obs = generate_catchment(cfg)
        _write_forcing(forcing, out / "forcings.csv")
        write_csv(obs, out / "obs.csv")
        a.forcings, a.obs = out / "forcings.csv", out / "obs.csv"
    runs = [("kge_ss", parse_method("ltm"))] + [(a.metric, m) for m in a.methods]
    cfg = AdamConfig(lr=a.lr, epochs=a.epochs, seed=derive_seed(a.seed, "calibrate"))
    sims = {}
    for metric, method in runs:
        setup, _ = _setup(a, metric, method)
        res = multi_seed_calibrate(setup, a.seeds, cfg)
        tag = f"{metric}@{method.label}"
        sims[tag] = setup.simulate(res.params)
        write_csv(sims[tag], out / f"sim_{metric}_{method.label.replace(':', '')}.csv")
        print(f"trained {tag}: train={res.train_value:.4f} eval={res.eval_value:.4f}", file=sys.stderr)
    obs = load_daily_csv(a.obs, value_column=a.obs_column)
    rows = []
    for tag, sim in sims.items():
        pair = PairedSeries(obs, sim)
        _, groups = flow_group_anomalies(pair, absolute=True)
        for method in a.methods:
            rep = full_report(pair, method)
            rows.append([tag, method.label, rep.kge_ss, rep.jkge_ss, rep.jkge_aug,
                         rep.get("Mstar"), rep.get("Vstar"), rep.get("Cstar"),
                         *(None if groups[g] is None else groups[g].median for g in GROUP_NAMES)])
    _write_rows(out / "experiment.csv",
                ["trained_with", "evaluated_with", "kge_ss", "jkge_ss", "jkge_aug",
                 "Mstar", "Vstar", "Cstar", *(f"abs_anom_{g}" for g in GROUP_NAMES)], rows)


# -- parser ---------------------------------------------------------------------

def _common_eval_flags(p):
    p.add_argument("--method", type=_method, default=parse_method("sa:30"),
                   help="benchmark: ltm, sa:N or ma:N (N odd)")
    p.add_argument("--eps-b", type=float, default=DEFAULT_EPS_B)
    p.add_argument("--obs-column", default="value")
    p.add_argument("--sim-column", default="value")


def _calibration_flags(p):
    p.add_argument("--forcings", help="CSV with date,precip,pet")
    p.add_argument("--obs", help="observed discharge CSV (mm/day)")
    p.add_argument("--obs-column", default="value")
    p.add_argument("--epochs", type=int, default=1500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seeds", type=int, default=10, help="number of random starts")
    p.add_argument("--train-fraction", type=float, default=0.6)
    p.add_argument("--spinup-years", type=int, default=3)
    p.add_argument("--out-dir", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jkge", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="cfs -> mm/day and/or log transform")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--date-column", default="date")
    p.add_argument("--value-column", default="value")
    p.add_argument("--area-km2", type=float, help="catchment area; input is then read as cfs")
    p.add_argument("--log", action="store_true")
    p.add_argument("--floor", type=float, default=DEFAULT_LOG_FLOOR)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("benchmark", help="emit the benchmark series of one input")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--date-column", default="date")
    p.add_argument("--value-column", default="value")
    p.add_argument("--method", type=_method, required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("evaluate", help="metrics, diagnostics and bootstrap for obs vs sim")
    p.add_argument("--obs", required=True)
    p.add_argument("--sim", required=True)
    _common_eval_flags(p)
    p.add_argument("--eps-sigma", type=float, default=DEFAULT_EPS_SIGMA)
    p.add_argument("--log-space", action="store_true")
    p.add_argument("--floor", type=float, default=DEFAULT_LOG_FLOOR)
    p.add_argument("--bootstrap", type=int, default=1000, help="replicates (0 disables)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="calibrate the bucket model with Adam")
    _calibration_flags(p)
    p.add_argument("--metric", choices=CALIBRATION_METRICS, default="jkge_aug")
    p.add_argument("--method", type=_method, default=parse_method("sa:30"))
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("grad-check", help="analytic vs finite-difference metric gradients")
    p.add_argument("--obs", required=True)
    p.add_argument("--sim", required=True)
    _common_eval_flags(p)
    p.add_argument("--metric", choices=GRADIENT_METRICS + ("all",), default="all")
    p.add_argument("--h", type=float, default=None, help="FD step (default 1e-6 * mean|sim|)")
    p.add_argument("--tol", type=float, default=1e-6, help="pass threshold on max relative error")
    p.add_argument("--out")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("synth", help="generate a synthetic catchment")
    p.add_argument("--config", help="key = value file overriding the defaults")
    p.add_argument("--years", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("experiment", help="train per metric/benchmark and cross-evaluate")
    _calibration_flags(p)
    p.add_argument("--config", help="synthetic catchment config (used without --forcings)")
    p.add_argument("--metric", choices=CALIBRATION_METRICS, default="jkge_aug")
    p.add_argument("--methods", default="sa:30",
                   type=lambda t: [_method(x) for x in t.split(",") if x.strip()],
                   help="comma-separated benchmark list, e.g. sa:365,sa:90,sa:30")
    p.set_defaults(func=cmd_experiment)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IngestionError, DegenerateInputError, JKGEError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
