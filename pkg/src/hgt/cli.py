"""Command-line interface.

Usage::

    hgt <command> [--config PATH] [--seed N] [--chains N] [--out DIR] [--threads N]

Commands
--------
simulate
    Run the Friedman multi-response benchmark and write ``benchmark.csv``
    (``replicate,method,rmse,containment_fraction,wall_seconds``) and
    ``residuals.csv`` (per-replicate containment and the quadratic R^2 of the
    median residual on the hidden covariate).
fit
    Read ``data.path``, split it by day, fit the transformed mixed effects
    model, optionally recalibrate the link on the validation days and forecast
    the test days.
forecast
    Reload stored chains from the output directory and redo validation and
    forecasting without refitting.
diagnose
    Reload stored chains and rewrite summaries, residual reports and the
    Gelman-Rubin table.
export-basis
    Write the joint thin-plate basis of ``data.path`` as ``basis.csv``.

Every command writes ``status.txt`` in the output directory. Its first line is
``ok`` or ``failed``; a failure names the stage and lists the files written
before it, which are partial. The exit code is 0 only on success.

Configuration
-------------
A plain text file with one ``section.key = value`` entry per line; see
:mod:`hgt.config` for the keys and defaults. Command-line flags override the
file. ``HGT_THREADS`` is used when ``--threads`` is absent and caps the
threads of the linear algebra libraries.

Chain dump format
-----------------
``chain_<k>.jsonl`` holds one JSON object per stored iteration with the keys,
in order: ``iteration`` (1-based), ``h``, ``gamma`` (``v, alpha2, kappa2,
alpha3, kappa3``), ``y`` and then one ``theta.<name>`` entry per parameter
block of the mixed effects model (``beta``, ``eta``, ``sigma2``,
``sigma2_eta``, ``sigma2_xi``). Arrays are flat and every float is written
with 17 significant digits, so a rerun with the same seed is byte-identical.
``chain_<k>.npz`` stores the same draws in binary form for the ``forecast``
and ``diagnose`` commands.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .basis import IndicatorDesign, JointBasisLayout, export_basis_csv
from .config import ConfigError, RunConfig
from .data import read_csv
from .diagnostics import (
    gelman_rubin,
    percentile,
    predictive_coverage,
    residual_intervals,
    summarize,
    summary_rows,
    write_report_csv,
)
from .engine import (
    KAPPA_NAMES,
    ChainConfig,
    ValidationLink,
    load_chain,
    run_algorithm2,
    run_algorithm3,
    save_chain,
    write_chain_dump,
)
from .pipeline import PipelineConfig, fitted_vs_observed, run_pipeline
from .sim import FriedmanConfig, run_benchmark, write_benchmark_csv, write_residual_csv
from .sme import SmeModel, shared_effect_summary
from .transform import HYPER_NAMES

COMMANDS = ("simulate", "fit", "forecast", "diagnose", "export-basis")


class Run:
    """Output directory bookkeeping: tracks written files and the current stage."""

    def __init__(self, out: Path):
        self.out = out
        self.written = []
        self.stage = "setup"

    def path(self, name) -> Path:
        p = self.out / name
        self.written.append(name)
        return p

    def enter(self, stage):
        self.stage = stage

    def write_status(self, error=None):
        lines = ["ok"] if error is None else ["failed", f"stage: {self.stage}", f"error: {error}"]
        if error is not None and self.written:
            lines.append("partial outputs: " + ", ".join(self.written))
        elif error is None:
            lines.append("outputs: " + ", ".join(self.written))
        (self.out / "status.txt").write_text("\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgt", description="Transformed hierarchical models for mixed-type data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="configuration file (section.key = value)")
    parser.add_argument("--seed", type=int, help="master seed (overrides chain.seed)")
    parser.add_argument("--chains", type=int, help="number of chains (overrides chain.chains)")
    parser.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    parser.add_argument("--threads", type=int, help="linear algebra threads (fallback: HGT_THREADS)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.set("chain.seed", args.seed)
    if args.chains is not None:
        cfg.set("chain.chains", args.chains)
    if args.out is not None:
        cfg.set("output.dir", str(args.out))
    if cfg["chain.chains"] < 1:
        raise ConfigError("chain.chains must be at least 1")
    return cfg.validate()


def resolve_threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("HGT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"HGT_THREADS must be an integer, got {env!r}") from None
    return None


def chain_config(cfg: RunConfig) -> ChainConfig:
    return ChainConfig(cfg["chain.iterations"], cfg["chain.burn_in"], cfg["chain.thin"], cfg["chain.seed"],
                       cfg["chain.chains"])


def pipeline_config(cfg: RunConfig) -> PipelineConfig:
    return PipelineConfig(cfg["basis.region_knots"], cfg["basis.shared_knots"], cfg["link.mode"],
                          cfg["link.min_observations"], chain_config(cfg))


def _load_splits(cfg: RunConfig):
    if not cfg["data.path"]:
        raise ConfigError("data.path is required")
    if cfg["basis.kind"] != "thinplate":
        raise ConfigError("the fit pipeline uses the thin-plate basis; set basis.kind = thinplate")
    data = read_csv(cfg["data.path"])
    end = cfg["split.train_end"] or int(data.day.max())
    return data.split_by_day(end, cfg["split.validation_days"], cfg["split.test_days"])


# ----------------------------------------------------------------------------- writers


def _write_summaries(run: Run, chains):
    rows = []
    for chain in chains:
        k = chain.chain_id
        rows += [(f"chain{k}:{name}", *r[1:]) for name, col in zip(HYPER_NAMES, chain.gamma.T)
                 for r in summary_rows(name, summarize(col[:, None]))]
        for name, draws in chain.theta.items():
            rows += [(f"chain{k}:{r[0]}", *r[1:]) for r in summary_rows(name, summarize(draws.reshape(len(chain), -1)))]
        rows += [(f"chain{k}:{r[0]}", *r[1:]) for r in summary_rows("y", summarize(chain.y))]
    draw_range = f"{chains[0].iterations[0]}-{chains[0].iterations[-1]}" if len(chains[0]) else ""
    write_report_csv(run.path("summary.csv"), [(*r, draw_range) for r in rows],
                     header=("cell", "statistic", "value", "iterations"))


def _write_residuals(run: Run, chains):
    rows = []
    for chain in chains:
        rep = residual_intervals(chain)
        for i, (lo, hi) in enumerate(zip(rep.lower, rep.upper)):
            rows.append((chain.chain_id, i, float(lo), float(hi), int(lo <= 0 <= hi)))
    write_report_csv(run.path("residuals.csv"), rows, header=("chain", "cell", "lower", "upper", "contains_zero"))


def _write_gelman_rubin(run: Run, chains):
    if len(chains) < 2 or len(chains[0]) < 10:
        return
    rows = [(name, gelman_rubin([c.gamma[:, j] for c in chains])) for j, name in enumerate(HYPER_NAMES)]
    for name in chains[0].theta:
        flat = [c.theta[name].reshape(len(c), -1) for c in chains]
        rows += [(f"{name}[{i}]", gelman_rubin([f[:, i] for f in flat])) for i in range(flat[0].shape[1])]
    write_report_csv(run.path("gelman_rubin.csv"), rows, header=("parameter", "rhat"))


def _write_forecast(run: Run, forecast, test, coverage):
    lo, hi = percentile(forecast.draws, [2.5, 97.5])
    rows = [(i, int(test.kind[i]), test.region[i], int(test.day[i]), float(forecast.mean[i]),
             float(forecast.variance[i]), float(lo[i]), float(hi[i]), float(test.value[i]))
            for i in range(len(test))]
    write_report_csv(run.path("forecast.csv"), rows,
                     header=("cell", "kind", "region", "day", "mean", "variance", "p2.5", "p97.5", "observed"))
    write_report_csv(run.path("coverage.csv"), [("all", coverage)], header=("cells", "coverage_95"))


def _write_link(run: Run, link: ValidationLink):
    rows = [(name, link.mode, float(m)) for name, m in zip(KAPPA_NAMES, link.posterior_mean())]
    write_report_csv(run.path("link.csv"), rows, header=("parameter", "mode", "posterior_mean"))


# ----------------------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, run: Run):
    run.enter("configure")
    fc = FriedmanConfig(
        I=cfg["sim.I"], I1=cfg["sim.I1"], I2=cfg["sim.I2"], I3=cfg["sim.I3"], trials=cfg["sim.trials"],
        replicates=cfg["sim.replicates"], seed=cfg["chain.seed"], hide_x2=cfg["sim.hide_x2"],
        iterations=cfg["chain.iterations"], burn_in=cfg["chain.burn_in"], r=cfg["basis.r"],
        neighbours=cfg["basis.neighbours"], methods=tuple(cfg["sim.methods"]),
    )
    run.enter("benchmark")
    results = run_benchmark(fc, progress=lambda r: print(f"replicate {r.replicate} done{' (' + r.error + ')' if r.error else ''}",
                                                          file=sys.stderr))
    run.enter("write")
    write_benchmark_csv(results, run.path("benchmark.csv"))
    write_residual_csv(results, run.path("residuals.csv"))
    failed = [r for r in results if r.error]
    if failed:
        run.enter("benchmark")
        raise RuntimeError(f"{len(failed)} replicate(s) failed: " + "; ".join(f"{r.replicate}: {r.error}" for r in failed))


def cmd_fit(cfg: RunConfig, run: Run):
    run.enter("ingest")
    train, validation, test = _load_splits(cfg)
    pcfg = pipeline_config(cfg)
    results = []
    for k in range(cfg["chain.chains"]):
        run.enter(f"pipeline (chain {k})")
        result = run_pipeline(train, validation, test, pcfg, chain_id=k)
        results.append(result)
        run.enter("write")
        write_chain_dump(result.chain, run.path(f"chain_{k}.jsonl"))
        save_chain(result.chain, run.path(f"chain_{k}.npz"))
    run.enter("write")
    chains = [r.chain for r in results]
    first = results[0]
    _write_summaries(run, chains)
    _write_residuals(run, chains)
    _write_gelman_rubin(run, chains)
    rows = fitted_vs_observed(first, train)
    write_report_csv(run.path("fitted_vs_observed.csv"), [tuple(r) for r in rows],
                     header=("day", "kind", "observed", "fitted_mean"))
    S = first.layout.matrix(train).S
    shared = slice(0, first.layout.shared_knots)
    summ = shared_effect_summary(first.chain.theta["eta"], S, train.day, columns=shared)
    keys = [k for k in summ if k != "day"]
    write_report_csv(run.path("shared_effect.csv"),
                     [(int(d), *(float(summ[k][i]) for k in keys)) for i, d in enumerate(summ["day"])],
                     header=("day", *keys))
    _write_link(run, first.link)
    if first.forecast is not None:
        _write_forecast(run, first.forecast, test, first.coverage)


def _reload(cfg: RunConfig, run: Run):
    run.enter("ingest")
    train, validation, test = _load_splits(cfg)
    run.enter("load chains")
    chains = []
    for k in range(cfg["chain.chains"]):
        path = run.out / f"chain_{k}.npz"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run the fit command first")
        chain = load_chain(path)
        if chain.fingerprint != train.fingerprint():
            raise ValueError(f"{path} was fitted to different training data")
        chains.append(chain)
    return train, validation, test, chains


def cmd_forecast(cfg: RunConfig, run: Run):
    train, validation, test, chains = _reload(cfg, run)
    if not len(test):
        raise ConfigError("split.test_days selects no rows")
    run.enter("basis")
    layout = JointBasisLayout.from_dataset(train, cfg["basis.region_knots"], cfg["basis.shared_knots"])
    design = IndicatorDesign.from_dataset(train)
    model = SmeModel(design.matrix(train).X, layout.matrix(train).S)

    def rows(data):
        return design.matrix(data).X, layout.matrix(data).S

    chain = chains[0]
    link = ValidationLink.identity()
    if cfg["link.mode"] == "linear" and len(validation):
        run.enter("validate")
        link = run_algorithm2(validation, chain, model, rows(validation), chain_config(cfg),
                              min_observations=cfg["link.min_observations"])
    run.enter("forecast")
    forecast = run_algorithm3(test, chain, model, rows(test), link)
    run.enter("write")
    _write_link(run, link)
    _write_forecast(run, forecast, test, predictive_coverage(forecast.draws, test.value))


def cmd_diagnose(cfg: RunConfig, run: Run):
    _, _, _, chains = _reload(cfg, run)
    run.enter("write")
    _write_summaries(run, chains)
    _write_residuals(run, chains)
    _write_gelman_rubin(run, chains)


def cmd_export_basis(cfg: RunConfig, run: Run):
    run.enter("ingest")
    if not cfg["data.path"]:
        raise ConfigError("data.path is required")
    data = read_csv(cfg["data.path"])
    run.enter("basis")
    layout = JointBasisLayout.from_dataset(data, cfg["basis.region_knots"], cfg["basis.shared_knots"])
    basis = layout.matrix(data)
    run.enter("write")
    export_basis_csv(basis, run.path("basis.csv"))
    write_report_csv(run.path("basis_columns.csv"), list(enumerate(basis.labels)), header=("col", "label"))


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "forecast": cmd_forecast, "diagnose": cmd_diagnose,
            "export-basis": cmd_export_basis}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        threads = resolve_threads(args)
    except (ConfigError, OSError) as exc:
        print(f"hgt: configuration error: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out)
    try:
        with threadpool_limits(limits=threads):
            HANDLERS[args.command](cfg, run)
    except Exception as exc:  # reported through status.txt and the exit code
        run.write_status(f"{type(exc).__name__}: {exc}")
        print(f"hgt: stage '{run.stage}' failed: {exc}", file=sys.stderr)
        return 1
    run.write_status()
    return 0


if __name__ == "__main__":
    sys.exit(main())
