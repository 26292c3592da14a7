"""Command-line front door: prepare, simulate, estimate, analyze, compare.

Runs are driven by one JSON config file; command-line flags override config
values. Relative paths inside the config resolve against the config file's
directory. Exit codes: 0 success, 2 user/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import dataprep
from .dataset import load_dataset, save_dataset
from .errors import NumericalError
from .params import ModelParams, default_prior
from .sampler import McmcConfig, run, save_archive, load_archive
from .simulator import CovariateSpec, SimSpec, default_true_params, save_truth, simulate
from .streams import chain_seed
from . import analysis

_TOP_KEYS = {"seed", "out", "dataset", "mcmc", "prior", "prepare", "simulate",
             "spi_transform", "chains"}
_MCMC_KEYS = {"total_iterations", "burn_in", "thin", "mh_dirichlet_mixture_weights",
              "init_strategy"}
_PRIOR_KEYS = {"coef_mean", "coef_var", "ig_shape", "ig_rate", "delta", "phi_weights"}
_PREPARE_KEYS = {"panel", "covariates", "financial", "financial_covariates",
                 "quarterly", "indicators", "aggregation", "values", "backcast", "rho"}
_SIM_KEYS = {"t_len", "n_units", "start", "unit_labels", "params",
             "bc_covariates", "fc_covariates"}
_SPI_KEYS = {"variant", "dichotomy_threshold", "a", "b"}


def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown config key(s) in {where}: {sorted(unknown)}")


def _load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    if not p.exists():
        raise ValueError(f"config file not found: {p}")
    with open(p) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    _reject_unknown(cfg, _TOP_KEYS, "config")
    for key, allowed in (("mcmc", _MCMC_KEYS), ("prior", _PRIOR_KEYS),
                         ("prepare", _PREPARE_KEYS), ("simulate", _SIM_KEYS),
                         ("spi_transform", _SPI_KEYS)):
        if key in cfg:
            _reject_unknown(cfg[key], allowed, key)
    return cfg, p.parent


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _effective_seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _effective_out(args, cfg: dict, base: Path) -> Path:
    if args.out is not None:
        return Path(args.out)
    if "out" in cfg:
        return _resolve(base, cfg["out"])
    raise ValueError("no output directory: pass --out or set 'out' in the config")


def _spi_spec(cfg: dict, args) -> dataprep.SpiTransformSpec:
    section = dict(cfg.get("spi_transform", {}))
    if getattr(args, "spi_transform", None):
        section["variant"] = args.spi_transform
    spec = dataprep.SpiTransformSpec(**section)
    spec.validate()
    return spec


def _apply_spi(series_by_name: dict, spec: dataprep.SpiTransformSpec) -> dict:
    """Replace the 'spi' entry with its transform (pairs become spi_dry/spi_wet)."""
    if "spi" not in series_by_name:
        return series_by_name
    out = dict(series_by_name)
    transformed = dataprep.spi_transform(out.pop("spi"), spec)
    if len(transformed) == 1:
        out["spi"] = transformed[0]
    else:
        out["spi_dry"], out["spi_wet"] = transformed
    return out


def cmd_prepare(args) -> int:
    cfg, base = _load_config(args.config)
    section = cfg.get("prepare", {})
    if args.panel is not None:
        section = dict(section)
        section["panel"] = args.panel
        base_panel = Path.cwd()
    else:
        base_panel = base
    if "panel" not in section:
        raise ValueError("prepare needs a 'panel' CSV (config prepare.panel or --panel)")
    out = _effective_out(args, cfg, base)
    spi_spec = _spi_spec(cfg, args)
    values_kind = section.get("values", "levels")
    if values_kind not in ("levels", "growth"):
        raise ValueError("prepare.values must be 'levels' or 'growth'")

    y_series = dataprep.read_panel_csv(_resolve(base_panel, section["panel"]))

    for unit, proxy_path in section.get("backcast", {}).items():
        if unit not in y_series:
            raise ValueError(f"backcast: unknown unit {unit!r}")
        proxy = dataprep.read_series_csv(_resolve(base, proxy_path))
        y_series[unit] = dataprep.backcast_missing(proxy, y_series[unit])

    if "financial" in section:
        fin = dataprep.read_series_csv(_resolve(base, section["financial"]))
    elif "quarterly" in section and "indicators" in section:
        quarterly = dataprep.read_quarterly_csv(_resolve(base, section["quarterly"]))
        indicators = dataprep.read_indicators_csv(_resolve(base, section["indicators"]))
        fin = dataprep.chow_lin(quarterly, indicators,
                                aggregation=section.get("aggregation", "average"),
                                rho=section.get("rho"))
    else:
        raise ValueError("prepare needs 'financial' or 'quarterly' + 'indicators'")

    if values_kind == "levels":
        y_series = {u: dataprep.growth_rate(s) for u, s in y_series.items()}
        fin = dataprep.growth_rate(fin)

    if "covariates" in section:
        bc_names, covs = dataprep.read_covariates_csv(_resolve(base, section["covariates"]))
        covs = {u: _apply_spi(by_name, spi_spec) for u, by_name in covs.items()}
        bc_names = list(next(iter(covs.values())).keys())
    else:
        bc_names, covs = [], {u: {} for u in y_series}

    if "financial_covariates" in section:
        fc_names, fin_covs = dataprep.read_fin_covariates_csv(
            _resolve(base, section["financial_covariates"]))
        fin_covs = _apply_spi(fin_covs, spi_spec)
        fc_names = list(fin_covs.keys())
    elif bc_names:
        fin_covs = dataprep.cross_unit_mean(covs, bc_names)
        fc_names = list(bc_names)
    else:
        fc_names, fin_covs = [], {}

    dataset = dataprep.assemble_panel(y_series, covs, fin, fin_covs, bc_names, fc_names)
    save_dataset(dataset, out)
    print(f"prepared dataset: T={dataset.t_len} N={dataset.n_units} -> {out}")
    return 0


def _sim_spec_from_config(cfg: dict, args, seed: int) -> SimSpec:
    section = dict(cfg.get("simulate", {}))
    t_len = args.T if args.T is not None else section.get("t_len")
    n_units = args.N if args.N is not None else section.get("n_units")
    if t_len is None or n_units is None:
        raise ValueError("simulate needs t_len/--T and n_units/--N")
    bc = [CovariateSpec(**c) for c in section.get("bc_covariates", [])]
    fc = [CovariateSpec(**c) for c in section.get("fc_covariates", [])]
    if "params" in section:
        params = ModelParams.from_dict(section["params"])
    else:
        params = default_true_params(int(n_units), 1 + len(bc), 1 + len(fc))
    spec = SimSpec(t_len=int(t_len), n_units=int(n_units), params=params,
                   bc_covariates=bc, fc_covariates=fc, rng_seed=seed,
                   start=section.get("start", "2000-01"),
                   unit_labels=section.get("unit_labels"))
    spec.validate()
    return spec


def cmd_simulate(args) -> int:
    cfg, base = _load_config(args.config)
    seed = _effective_seed(args, cfg)
    out = _effective_out(args, cfg, base)
    spec = _sim_spec_from_config(cfg, args, seed)
    dataset, states = simulate(spec)
    save_dataset(dataset, out)
    save_truth(spec.params, states, dataset.unit_labels, out)
    meta_extra = {"t_len": spec.t_len, "n_units": spec.n_units, "rng_seed": seed,
                  "start": spec.start}
    with open(Path(out) / "sim_meta.json", "w") as fh:
        json.dump(meta_extra, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"simulated dataset: T={spec.t_len} N={spec.n_units} -> {out}")
    return 0


def _mcmc_config(cfg: dict, args, seed: int) -> McmcConfig:
    section = dict(cfg.get("mcmc", {}))
    if args.iters is not None:
        section["total_iterations"] = args.iters
    if args.burn is not None:
        section["burn_in"] = args.burn
    if args.thin is not None:
        section["thin"] = args.thin
    if "mh_dirichlet_mixture_weights" in section:
        section["mh_dirichlet_mixture_weights"] = tuple(section["mh_dirichlet_mixture_weights"])
    config = McmcConfig(rng_seed=seed, **section)
    config.validate()
    return config


def _run_one_chain(dataset_path: str, prior_kwargs: dict, config_dict: dict,
                   out_dir: str) -> str:
    dataset = load_dataset(dataset_path)
    prior = default_prior(dataset.n_units, dataset.m_bc, dataset.m_fc, **prior_kwargs)
    config = McmcConfig(**config_dict)
    draws = run(dataset, prior, config)
    save_archive(draws, out_dir)
    return out_dir


def cmd_estimate(args) -> int:
    cfg, base = _load_config(args.config)
    seed = _effective_seed(args, cfg)
    out = _effective_out(args, cfg, base)
    dataset_path = args.dataset if args.dataset is not None else cfg.get("dataset")
    if dataset_path is None:
        raise ValueError("estimate needs a dataset (config 'dataset' or --dataset)")
    dataset_path = str(_resolve(base if args.dataset is None else Path.cwd(), dataset_path))
    dataset = load_dataset(dataset_path)

    prior_kwargs = dict(cfg.get("prior", {}))
    if "delta" in prior_kwargs:
        prior_kwargs["delta"] = tuple(prior_kwargs["delta"])
    if "phi_weights" in prior_kwargs:
        prior_kwargs["phi_weights"] = tuple(prior_kwargs["phi_weights"])
    config = _mcmc_config(cfg, args, seed)
    n_chains = args.chains if args.chains is not None else int(cfg.get("chains", 1))
    if n_chains < 1:
        raise ValueError("--chains must be >= 1")

    if n_chains == 1:
        prior = default_prior(dataset.n_units, dataset.m_bc, dataset.m_fc, **prior_kwargs)
        draws = run(dataset, prior, config)
        save_archive(draws, out)
        status = "complete" if draws.complete else "interrupted (partial archive)"
        print(f"estimate: retained {draws.n_retained} draws ({status}) -> {out}")
        return 0

    jobs = []
    for c in range(n_chains):
        cfg_dict = config.to_dict()
        cfg_dict["rng_seed"] = chain_seed(seed, c)
        cfg_dict["mh_dirichlet_mixture_weights"] = tuple(
            cfg_dict["mh_dirichlet_mixture_weights"])
        jobs.append((dataset_path, prior_kwargs, cfg_dict,
                     str(Path(out) / f"chain_{c:02d}")))
    with ProcessPoolExecutor(max_workers=min(n_chains, 4),
                             mp_context=get_context("spawn")) as pool:
        for done in pool.map(_run_one_chain, *zip(*jobs)):
            print(f"estimate: chain archive -> {done}")
    return 0


def cmd_analyze(args) -> int:
    cfg, base = _load_config(args.config)
    out = _effective_out(args, cfg, base)
    run_dir = args.run if args.run is not None else cfg.get("dataset")
    if run_dir is None:
        raise ValueError("analyze needs a draws archive (--run)")
    draws = load_archive(run_dir)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = analysis.summarize(draws)
    analysis.write_summary_csv(summary, out / "summary.csv")
    analysis.write_cycles_csv(summary, out / "cycles.csv")
    mat, labels = analysis.concordance_matrix(draws)
    analysis.write_matrix_csv(mat, labels, out / "concordance.csv")
    print(f"analyze: wrote summary.csv, cycles.csv, concordance.csv -> {out}")
    return 0


def cmd_compare(args) -> int:
    cfg, base = _load_config(args.config)
    out = _effective_out(args, cfg, base)
    if len(args.runs) < 2:
        raise ValueError("compare needs at least two run directories")
    mat, names = analysis.compare_model_runs(args.runs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_matrix_csv(mat, names, out / "bayes_factors.csv")
    print(f"compare: wrote bayes_factors.csv for {len(names)} models -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panelms",
                                     description="Panel Markov-switching cycle model")
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a dataset from raw CSV series")
    p.add_argument("--panel", help="panel.csv path (overrides config)")
    p.add_argument("--spi-transform", choices=dataprep.SpiTransformSpec.VARIANTS,
                   help="drought-index transform variant")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("simulate", help="generate a synthetic dataset with known truth")
    p.add_argument("--T", type=int, help="number of months")
    p.add_argument("--N", type=int, help="number of units")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run the posterior simulator")
    p.add_argument("--dataset", help="dataset directory or dataset.csv")
    p.add_argument("--iters", type=int, help="total Gibbs iterations")
    p.add_argument("--burn", type=int, help="burn-in iterations")
    p.add_argument("--thin", type=int, help="thinning stride")
    p.add_argument("--chains", type=int, help="independent chains run in parallel")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("analyze", help="summaries, cycles and concordance from an archive")
    p.add_argument("--run", help="draws archive directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="pairwise log-Bayes-factor matrix")
    p.add_argument("runs", nargs="*", help="draws archive directories")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
