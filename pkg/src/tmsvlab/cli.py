"""Command-line interface.

Subcommands: simulate, fit, reconstruct, metrics, report, plotdata.
Exit codes: 0 success, 2 invalid configuration or arguments, 3 impossible
herald pattern, 4 insufficient data for a fit or reconstruction.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .errors import ConfigError, HeraldImpossibleError, InsufficientDataError
from .fock import density_from_json, density_to_json
from .homodyne import read_quadrature_csv
from .metrics import compute_metrics, quadrature_moments, _variance_from_moments
from .pipeline import (
    HERALD_CLASSES,
    ExperimentConfig,
    _curve_and_phase_sigmas,
    config_from_mapping,
    fit_from_blocks,
    load_blocks_from_csv,
    read_config_mapping,
    run_experiment,
    write_experiment_outputs,
)
from .report import make_report, reconstruction_metrics
from .tomography import ReconstructionOptions, reconstruct_from_records

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HERALD = 3
EXIT_DATA = 4


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, default=None, help=f"override {f.name}")


def _config_from_args(args) -> ExperimentConfig:
    mapping = {}
    if args.config:
        mapping.update(read_config_mapping(args.config))
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            mapping[f.name] = value
    return config_from_mapping(mapping)


def _load_meta(data_dir) -> dict:
    with open(os.path.join(data_dir, "meta.json")) as fh:
        return json.load(fh)


def cmd_simulate(args) -> int:
    config = _config_from_args(args)
    config.require_seed()
    result = run_experiment(config)
    paths = write_experiment_outputs(result, args.out)
    print(f"wrote {len(paths)} files to {args.out}")
    for name in HERALD_CLASSES:
        print(f"  herald '{name}': probability {result.probabilities[name]:.6g}")
    return EXIT_OK


def cmd_fit(args) -> int:
    meta = _load_meta(os.path.dirname(args.csv) or ".") if args.use_meta else None
    blocks = load_blocks_from_csv(args.csv, meta)
    fit = fit_from_blocks(blocks, args.eta_effective)
    payload = {
        "zeta": fit.zeta,
        "zeta_stderr": fit.zeta_stderr,
        "eta_effective": fit.eta,
        "chi2": fit.chi2,
        "dof": fit.dof,
        "chi2_per_dof": fit.chi2_per_dof,
    }
    print(
        f"zeta = {fit.zeta:.5f} +- {fit.zeta_stderr:.5f} "
        f"(chi2/dof = {fit.chi2_per_dof:.3f}, eta = {fit.eta:.4f})"
    )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    records = read_quadrature_csv(args.csv)
    opts = ReconstructionOptions(
        cutoff=args.cutoff,
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
        bin_width=args.bin_width,
    )
    result = reconstruct_from_records(records, opts)
    with open(args.out, "w") as fh:
        fh.write(density_to_json(result.state))
    print(
        f"reconstructed n_max={args.cutoff} state from {len(records['x1'])} samples "
        f"({result.projector_count} projectors, {result.iterations} iterations, "
        f"converged={result.converged})"
    )
    return EXIT_OK


def cmd_metrics(args) -> int:
    with open(args.density) as fh:
        rho = density_from_json(fh.read())
    if rho.mode_count != 2:
        raise ConfigError("metrics require a two-mode density matrix")
    report = compute_metrics(rho)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return EXIT_OK


def _model_curve_columns(state, thetas):
    m = quadrature_moments(state)
    return {
        "theta": thetas,
        "minus": _variance_from_moments(m, thetas / 2, thetas / 2, -1),
        "plus": _variance_from_moments(m, thetas / 2, thetas / 2, +1),
    }


def _load_states(data_dir) -> dict:
    states = {}
    for name in HERALD_CLASSES:
        with open(os.path.join(data_dir, f"state_{name}.json")) as fh:
            states[name] = density_from_json(fh.read())
    return states


def _write_curve_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_sum", "sign", "variance", "stderr"])
        for p in points:
            writer.writerow(
                [
                    format(p.theta_sum, ".12g"),
                    "-" if p.sign < 0 else "+",
                    format(p.variance, ".12g"),
                    format(p.stderr, ".12g"),
                ]
            )


def _write_density_csv(path, rho, n_show=3) -> None:
    d = rho.cutoff.dim
    keep = min(n_show, rho.cutoff.n_max) + 1
    matrix = rho.matrix.reshape(d, d, d, d)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m1", "m2", "n1", "n2", "re", "im", "abs"])
        for m1 in range(keep):
            for m2 in range(keep):
                for n1 in range(keep):
                    for n2 in range(keep):
                        z = matrix[m1, m2, n1, n2]
                        writer.writerow(
                            [
                                m1,
                                m2,
                                n1,
                                n2,
                                format(z.real, ".12g"),
                                format(z.imag, ".12g"),
                                format(abs(z), ".12g"),
                            ]
                        )


def cmd_report(args) -> int:
    meta = _load_meta(args.data_dir)
    config = config_from_mapping(meta["config"])
    eta_eff = float(meta["effective_transmission"])
    states = _load_states(args.data_dir)

    blocks = {
        name: load_blocks_from_csv(
            os.path.join(args.data_dir, f"quadratures_{name}.csv"), meta
        )
        for name in HERALD_CLASSES
    }
    fits = {
        "none": fit_from_blocks(blocks["none"], eta_eff),
        "both": fit_from_blocks(blocks["both"], eta_eff),
    }

    reconstructions = None
    recon_states = {}
    if not args.skip_reconstruction:
        cutoffs = tuple(int(c) for c in args.recon_cutoffs.split(","))
        reconstructions = {}
        class_rows = {"none": "initial", "both": "dual_subtracted", "one": "single_subtracted"}
        for name, row in class_rows.items():
            records = read_quadrature_csv(
                os.path.join(args.data_dir, f"quadratures_{name}.csv")
            )
            metrics, states_by_cutoff = reconstruction_metrics(
                records, cutoffs, args.max_iterations, args.tolerance
            )
            reconstructions[row] = metrics
            recon_states[name] = states_by_cutoff

    from .pipeline import coincidence_rate, tap_compensated_state

    loss = config.loss()
    extras = {
        "tap_t": config.tap_t,
        "eta_compensated": 0.5 * (loss.eta1 + loss.eta2),
        "coincidence_rate_hz": coincidence_rate(
            config.rep_rate_hz,
            config.pair_probability,
            config.tap_t,
            config.filter_transmission,
            config.eta_d,
        ),
        "herald_probabilities": meta["herald_probabilities"],
    }
    report = make_report(states, tap_compensated_state(config), fits, reconstructions, extras)

    os.makedirs(args.out_dir, exist_ok=True)
    text = report.render_text()
    with open(os.path.join(args.out_dir, "report.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(args.out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json())
    for name, by_cutoff in recon_states.items():
        for cutoff, state in by_cutoff.items():
            path = os.path.join(args.out_dir, f"density_{name}_n{cutoff}.json")
            with open(path, "w") as fh:
                fh.write(density_to_json(state))
    if not args.no_figures:
        from .plotting import save_density_figure, save_variance_figure

        thetas = np.linspace(0.0, np.pi, 181)
        curves = {name: _curve_and_phase_sigmas(blocks[name])[0] for name in ("none", "both")}
        model_curves = {
            name: {"exact state": _model_curve_columns(states[name], thetas)}
            for name in ("none", "both")
        }
        save_variance_figure(
            curves, model_curves, os.path.join(args.out_dir, "variance_curves.png")
        )
        save_density_figure(
            states, os.path.join(args.out_dir, "fock_matrices_model.png")
        )
        if recon_states:
            primary = {
                name: by_cutoff[min(by_cutoff)] for name, by_cutoff in recon_states.items()
            }
            save_density_figure(
                primary, os.path.join(args.out_dir, "fock_matrices_reconstructed.png")
            )
    print(text)
    return EXIT_OK


def cmd_plotdata(args) -> int:
    meta = _load_meta(args.data_dir)
    eta_eff = float(meta["effective_transmission"])
    states = _load_states(args.data_dir)
    os.makedirs(args.out_dir, exist_ok=True)

    curves = {}
    for name in HERALD_CLASSES:
        blocks = load_blocks_from_csv(
            os.path.join(args.data_dir, f"quadratures_{name}.csv"), meta
        )
        points, _ = _curve_and_phase_sigmas(blocks)
        curves[name] = points
        _write_curve_csv(os.path.join(args.out_dir, f"variance_curve_{name}.csv"), points)

    thetas = np.linspace(0.0, np.pi, 181)
    model_columns = {}
    for name in HERALD_CLASSES:
        model_columns[name] = _model_curve_columns(states[name], thetas)
    with open(os.path.join(args.out_dir, "model_curves.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["theta_sum"]
        for name in HERALD_CLASSES:
            header += [f"{name}_minus", f"{name}_plus"]
        writer.writerow(header)
        for i, theta in enumerate(thetas):
            row = [format(theta, ".12g")]
            for name in HERALD_CLASSES:
                row.append(format(model_columns[name]["minus"][i], ".12g"))
                row.append(format(model_columns[name]["plus"][i], ".12g"))
            writer.writerow(row)

    for name in HERALD_CLASSES:
        _write_density_csv(
            os.path.join(args.out_dir, f"density_elements_{name}_model.csv"), states[name]
        )
    recon_states = {}
    if args.reconstructions_dir:
        for name in HERALD_CLASSES:
            for candidate in sorted(os.listdir(args.reconstructions_dir)):
                if candidate.startswith(f"density_{name}_") and candidate.endswith(".json"):
                    with open(os.path.join(args.reconstructions_dir, candidate)) as fh:
                        recon_states[name] = density_from_json(fh.read())
                    break
        for name, rho in recon_states.items():
            _write_density_csv(
                os.path.join(args.out_dir, f"density_elements_{name}_reconstructed.csv"),
                rho,
            )

    if not args.no_figures:
        from .plotting import save_density_figure, save_variance_figure

        model_curves = {
            name: {"exact state": model_columns[name]} for name in ("none", "both")
        }
        save_variance_figure(
            {k: curves[k] for k in ("none", "both")},
            model_curves,
            os.path.join(args.out_dir, "variance_curves.png"),
        )
        save_density_figure(states, os.path.join(args.out_dir, "fock_matrices_model.png"))
        if recon_states:
            save_density_figure(
                recon_states,
                os.path.join(args.out_dir, "fock_matrices_reconstructed.png"),
            )
    print(f"plot data written to {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmsvlab",
        description="Simulate and analyse two-mode squeezed vacuum distillation "
        "by heralded photon subtraction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the experiment and write CSV/JSON datasets")
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the variance curve of a quadrature CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--eta-effective", type=float, required=True,
                   help="total transmission held fixed in the fit")
    p.add_argument("--use-meta", action="store_true",
                   help="read phase uncertainties from meta.json next to the CSV")
    p.add_argument("--out", help="write the fit result as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reconstruct", help="maximum-likelihood state reconstruction")
    p.add_argument("--csv", required=True)
    p.add_argument("--cutoff", type=int, default=3)
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--out", required=True, help="output density-matrix JSON")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="entanglement/squeezing metrics of a density JSON")
    p.add_argument("--density", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="summary table from a simulation directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--skip-reconstruction", action="store_true")
    p.add_argument("--recon-cutoffs", default="3,5")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plotdata", help="emit variance-curve and density-element series")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--reconstructions-dir")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_plotdata)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeraldImpossibleError as exc:
        print(f"herald impossible: {exc}", file=sys.stderr)
        return EXIT_HERALD
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
