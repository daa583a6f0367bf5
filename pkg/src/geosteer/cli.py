"""Command-line front end.

Every subcommand writes its outputs plus a ``manifest_<command>.json``
recording the resolved parameters (excluding the output directory), so a
run can be reproduced byte-for-byte from its manifest.  Parameter
resolution order: built-in defaults, then values from ``--config`` (a
JSON file), then flags given explicitly on the command line.

Commands that build a synthetic case derive their random streams from
``--seed`` with fixed offsets, so ``truth``, ``simulate``, and the two
``invert-*`` commands agree on the truth and the observed data whenever
they are given the same seed.
"""

import argparse
import pathlib
import sys

import numpy as np

from . import __version__, gridio
from .emlog import default_tool, load_tool_spec
from .enrml import EnrmlConfig, localize, run_enrml
from .generator import DEFAULT_CONFIG, PriorSpec, generate, sample_prior
from .harness import (
    DESK_PROTOCOL,
    PAPER_SCALE_PROTOCOL,
    WELL_ROW,
    build_noise_model,
    default_well,
    make_forward,
    make_truth,
    near_well_ratio,
    ahead_ratio,
    posterior_stats,
    simulate_well_log,
    warm_start_mcmc,
)
from .mcmc import GaussianTarget, run_mcmc
from .petro import derive_resistivity

# Offsets mixed into the seed so each random role gets its own stream.
_NOISE_STREAM = 1
_ENSEMBLE_STREAM = 2
_CHAIN_STREAM = 3
_BASELINE_STREAM = 4

_DEFAULTS = {
    "truth": {"seed": 0},
    "generate": {"seed": 0, "n": 4},
    "simulate": {"seed": 0, "tool": None},
    "invert-enrml": {
        "seed": 0,
        "n": DESK_PROTOCOL["n_members"],
        "max_iter": 30,
        "localize": None,
        "paper_scale": False,
        "tool": None,
    },
    "invert-mcmc": {
        "seed": 0,
        "n": DESK_PROTOCOL["n_members"],
        "chains": DESK_PROTOCOL["n_chains"],
        "iters": DESK_PROTOCOL["n_iters"],
        "thin": DESK_PROTOCOL["thin"],
        "cold_start": False,
        "paper_scale": False,
        "tool": None,
    },
    "stats": {"samples": None, "prior": None},
    "export": {"grid": None, "log_scale": False, "mark_well": False},
}

_PROTOCOL_KEYS = {
    "invert-enrml": {"n": "n_members"},
    "invert-mcmc": {"n": "n_members", "chains": "n_chains", "iters": "n_iters",
                    "thin": "thin"},
}


def _resolve(command, args, explicit):
    """Merge defaults, config file, and explicit flags into one dict.

    The config file is either a flat parameter dict or a manifest written
    by an earlier run, so any run can be reproduced with
    ``--config <out>/manifest_<command>.json``.
    """
    params = dict(_DEFAULTS[command])
    if args.config:
        loaded = gridio.read_json(args.config)
        if "command" in loaded and "params" in loaded:
            if loaded["command"] != command:
                raise SystemExit(
                    f"manifest is for {loaded['command']!r}, not {command!r}"
                )
            loaded = loaded["params"]
        unknown = set(loaded) - set(params)
        if unknown:
            raise SystemExit(f"unknown config keys for {command}: {sorted(unknown)}")
        params.update(loaded)
    for key in explicit:
        params[key] = getattr(args, key.replace("-", "_"))
    if params.get("paper_scale"):
        for flag, proto_key in _PROTOCOL_KEYS[command].items():
            if flag not in explicit:
                params[flag] = PAPER_SCALE_PROTOCOL[proto_key]
    return params


def _explicit_keys(argv_tail, parser):
    """Names of the options actually present on the command line."""
    actions = {
        opt: action.dest
        for action in parser._actions
        for opt in action.option_strings
    }
    found = set()
    for token in argv_tail:
        name = token.split("=", 1)[0]
        if name in actions and actions[name] not in ("config", "out", "help"):
            found.add(actions[name])
    return found


def _out_dir(args):
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, params):
    manifest = {"command": command, "version": __version__, "params": params}
    gridio.write_json(out / f"manifest_{command.replace('-', '_')}.json", manifest)


def _load_tool(params):
    return load_tool_spec(params["tool"]) if params.get("tool") else default_tool()


def _observations(params, tool):
    """Shared truth -> clean log -> noisy observations derivation."""
    truth = make_truth(params["seed"])
    clean = simulate_well_log(truth.resistivity, tool=tool)
    noise_rng = np.random.default_rng(
        np.random.SeedSequence([params["seed"], _NOISE_STREAM])
    )
    obs = build_noise_model(clean, noise_rng)
    return truth, clean, obs


def _write_posterior_maps(out, samples, prior_samples):
    summary = posterior_stats(samples, prior_samples)
    gridio.write_matrix_csv(out / "posterior_mean.csv", summary.mean)
    gridio.write_matrix_csv(out / "posterior_std.csv", summary.std)
    gridio.write_matrix_csv(out / "uncertainty_ratio.csv", summary.ratio)
    return summary


def _baseline_prior(params, count):
    rng = np.random.default_rng(
        np.random.SeedSequence([params["seed"], _BASELINE_STREAM])
    )
    return sample_prior(PriorSpec(), count, rng)


def cmd_truth(args, explicit):
    params = _resolve("truth", args, explicit)
    out = _out_dir(args)
    truth = make_truth(params["seed"])
    gridio.write_matrix_csv(out / "truth_latent.csv", truth.latent[None, :])
    gridio.write_facies_grids(out / "truth", truth.grid)
    gridio.write_matrix_csv(out / "truth_resistivity.csv", truth.resistivity)
    _write_manifest(out, "truth", params)
    print(f"truth case written to {out}")


def cmd_generate(args, explicit):
    params = _resolve("generate", args, explicit)
    out = _out_dir(args)
    rng = np.random.default_rng(np.random.SeedSequence([params["seed"]]))
    latents = sample_prior(PriorSpec(), params["n"], rng)
    gridio.write_matrix_csv(out / "latents.csv", latents)
    for k, m in enumerate(latents):
        resistivity = derive_resistivity(generate(m))
        gridio.write_matrix_csv(out / f"resistivity_{k:03d}.csv", resistivity)
    _write_manifest(out, "generate", params)
    print(f"{params['n']} prior realizations written to {out}")


def cmd_simulate(args, explicit):
    params = _resolve("simulate", args, explicit)
    out = _out_dir(args)
    tool = _load_tool(params)
    truth, clean, obs = _observations(params, tool)
    n_ch = clean.shape[1]
    gridio.write_measurements_csv(out / "clean_measurements.csv", clean)
    gridio.write_measurements_csv(
        out / "observations.csv", obs.d_obs.reshape(-1, n_ch)
    )
    gridio.write_measurements_csv(
        out / "noise_std.csv", np.sqrt(obs.scaling).reshape(-1, n_ch)
    )
    _write_manifest(out, "simulate", params)
    print(f"simulated {obs.n_data} measurements to {out}")


def cmd_invert_enrml(args, explicit):
    params = _resolve("invert-enrml", args, explicit)
    out = _out_dir(args)
    tool = _load_tool(params)
    truth, clean, obs = _observations(params, tool)
    forward = make_forward(tool=tool)

    ens_rng = np.random.default_rng(
        np.random.SeedSequence([params["seed"], _ENSEMBLE_STREAM])
    )
    prior = sample_prior(PriorSpec(), params["n"], ens_rng).T
    config = EnrmlConfig(
        max_iter=params["max_iter"], localize_threshold=params["localize"]
    )
    result = run_enrml(prior, obs, forward, config, rng=ens_rng)

    gridio.write_matrix_csv(out / "prior_ensemble.csv", prior.T)
    gridio.write_matrix_csv(out / "posterior_ensemble.csv", result.members.T)
    gridio.write_jsonl(out / "enrml_log.jsonl", result.log)
    summary = _write_posterior_maps(out, result.members.T, prior.T)
    gridio.write_json(
        out / "summary.json",
        {
            "converged": result.converged,
            "n_iterations": result.n_iterations,
            "initial_misfit": result.misfit_history[0],
            "final_misfit": result.misfit,
            "near_well_ratio": near_well_ratio(summary),
            "ahead_ratio": ahead_ratio(summary),
        },
    )
    _write_manifest(out, "invert-enrml", params)
    print(
        f"enrml: {result.n_iterations} iterations, misfit "
        f"{result.misfit_history[0]:.1f} -> {result.misfit:.1f}, "
        f"converged={result.converged}"
    )


def cmd_invert_mcmc(args, explicit):
    params = _resolve("invert-mcmc", args, explicit)
    out = _out_dir(args)
    tool = _load_tool(params)
    truth, clean, obs = _observations(params, tool)
    forward = make_forward(tool=tool)

    target = GaussianTarget(PriorSpec().variance, forward, obs, dim=PriorSpec().dim)
    if params["cold_start"]:
        result = run_mcmc(
            target,
            n_chains=params["chains"],
            n_iters=params["iters"],
            thin=params["thin"],
            seed=[params["seed"], _CHAIN_STREAM],
        )
    else:
        # Warm start: a cheap ensemble run seeds the chain starts and the
        # proposal covariances.  The ensemble stream matches invert-enrml,
        # so both commands see the same prior ensemble for a given seed.
        ens_rng = np.random.default_rng(
            np.random.SeedSequence([params["seed"], _ENSEMBLE_STREAM])
        )
        prior = sample_prior(PriorSpec(), params["n"], ens_rng).T
        ensemble = run_enrml(prior, obs, forward, EnrmlConfig(), rng=ens_rng)
        result = warm_start_mcmc(
            target,
            ensemble.members,
            n_chains=params["chains"],
            n_iters=params["iters"],
            thin=params["thin"],
            seed=[params["seed"], _CHAIN_STREAM],
        )

    gridio.write_matrix_csv(out / "mcmc_samples.csv", result.retained)
    diagnostics = [{"kind": "psrf", **rec} for rec in result.psrf_trace]
    diagnostics += [
        {"kind": "acceptance", "chain": i, "rate": float(r)}
        for i, r in enumerate(result.acceptance_rates)
    ]
    gridio.write_jsonl(out / "mcmc_diagnostics.jsonl", diagnostics)
    prior = _baseline_prior(params, min(len(result.retained), 500))
    summary = _write_posterior_maps(out, result.retained, prior)
    gridio.write_json(
        out / "summary.json",
        {
            "final_psrf": result.final_psrf,
            "n_retained": int(len(result.retained)),
            "warm_start": not params["cold_start"],
            "acceptance_rates": [float(r) for r in result.acceptance_rates],
            "near_well_ratio": near_well_ratio(summary),
            "ahead_ratio": ahead_ratio(summary),
        },
    )
    _write_manifest(out, "invert-mcmc", params)
    psrf_text = (
        f"{result.final_psrf:.3f}" if result.final_psrf is not None else "n/a"
    )
    print(f"mcmc: {len(result.retained)} retained samples, psrf={psrf_text}")


def cmd_stats(args, explicit):
    params = _resolve("stats", args, explicit)
    if not params["samples"] or not params["prior"]:
        raise SystemExit("stats needs --samples and --prior")
    out = _out_dir(args)
    samples = gridio.read_matrix_csv(params["samples"])
    prior = gridio.read_matrix_csv(params["prior"])
    summary = _write_posterior_maps(out, samples, prior)
    gridio.write_json(
        out / "summary.json",
        {
            "n_samples": summary.n_samples,
            "near_well_ratio": near_well_ratio(summary),
            "ahead_ratio": ahead_ratio(summary),
        },
    )
    _write_manifest(out, "stats", params)
    print(f"posterior maps written to {out}")


def cmd_export(args, explicit):
    params = _resolve("export", args, explicit)
    if not params["grid"]:
        raise SystemExit("export needs --grid")
    out = _out_dir(args)
    values = gridio.read_matrix_csv(params["grid"])
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise SystemExit("grid has no finite values to render")
    image = gridio.to_gray(
        values, finite.min(), finite.max(), log=params["log_scale"]
    )
    if params["mark_well"]:
        image = gridio.mark_cells(image, default_well())
    name = pathlib.Path(params["grid"]).stem + ".pgm"
    gridio.write_pgm(out / name, image)
    _write_manifest(out, "export", params)
    print(f"image written to {out / name}")


_HANDLERS = {
    "truth": cmd_truth,
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "invert-enrml": cmd_invert_enrml,
    "invert-mcmc": cmd_invert_mcmc,
    "stats": cmd_stats,
    "export": cmd_export,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geosteer",
        description="Synthetic geosteering workflows: earth models, "
        "along-well logs, and ensemble/MCMC inversions.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON file with parameter overrides")
        subparsers[name] = p
        return p

    p = add("truth", "draw a synthetic truth case")
    p.add_argument("--seed", type=int)

    p = add("generate", "draw prior realizations and their resistivity grids")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="number of realizations")

    p = add("simulate", "log the truth case and add correlated noise")
    p.add_argument("--seed", type=int)
    p.add_argument("--tool", help="JSON tool specification")

    p = add("invert-enrml", "ensemble inversion of the synthetic case")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="ensemble size")
    p.add_argument("--max-iter", type=int, help="iteration budget")
    p.add_argument("--localize", type=float, help="correlation threshold")
    p.add_argument("--paper-scale", action="store_true",
                   help="full-scale protocol (500 members)")
    p.add_argument("--tool", help="JSON tool specification")

    p = add("invert-mcmc", "adaptive MCMC inversion of the synthetic case")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="ensemble size for the warm start")
    p.add_argument("--cold-start", action="store_true",
                   help="start chains from the prior instead of an ensemble run")
    p.add_argument("--chains", type=int)
    p.add_argument("--iters", type=int, help="iterations per chain")
    p.add_argument("--thin", type=int, help="keep every thin-th sample")
    p.add_argument("--paper-scale", action="store_true",
                   help="full-scale protocol (8 chains x 1e6 iterations)")
    p.add_argument("--tool", help="JSON tool specification")

    p = add("stats", "posterior maps from stored latent samples")
    p.add_argument("--samples", help="CSV of posterior latent samples")
    p.add_argument("--prior", help="CSV of prior latent samples")

    p = add("export", "render a grid CSV to a PGM image")
    p.add_argument("--grid", help="CSV grid to render")
    p.add_argument("--log-scale", action="store_true",
                   help="grayscale in log10 of the values")
    p.add_argument("--mark-well", action="store_true",
                   help="mark the drilled cells")

    return parser, subparsers


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    explicit = _explicit_keys(argv[1:], subparsers[args.command])
    _HANDLERS[args.command](args, explicit)
    return 0


if __name__ == "__main__":
    sys.exit(main())
