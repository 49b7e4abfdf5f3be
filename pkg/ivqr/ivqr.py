#!/usr/bin/env python

"""
ivqr
====

Command-line interface.

Subcommands:
    - fit: profiled IVQR estimates
    - test: gradient wild bootstrap (T, T_CR, AR, AR_CR) and baseline (T_STD, IM, CRS) tests
    - ci: confidence sets by test inversion
    - simulate: Monte Carlo rejection tables on DGP 1 or DGP 2
    - cluster: spectral partition of a network

Run options come from the packaged defaults, ``~/.ivqr_config.yaml``, the file
given with ``--config`` and the command-line flags, in increasing precedence.

:Example:

ivqr test data.csv --method T_CR AR --tau 0.5 --beta0 1.5 --seed 1 --out results.json
ivqr simulate --dgp 1 --J 9 --dz 1 --pi 1.0 --reps 500 --draws 300 --seed 42 --out table.csv --format csv
"""

from argparse import ArgumentParser
import logging
import sys
import warnings

from . import io
from .bootstrap import confidence_set, normalize_method, run_test
from .clustering import spectral_partition
from .estimator import estimate
from .instruments import build_instruments
from .models import Dgp1Config, Dgp2Config, McConfig, NumericalError, RunConfig, ValidationError
from .simulation import monte_carlo
from .toolkit import resolve_n_jobs

__author__ = "ivqr developers"
__license__ = "GPL2"
__version__ = "0.1"
__status__ = "Development"


logger = logging.getLogger("ivqr")


def main(argv=None):
    # Parse command-line arguments
    parser = ArgumentParser(
        prog="ivqr",
        description="ivqr. Gradient wild bootstrap inference for instrumental variable quantile regression."
    )
    parser = add_args(parser)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        sys.exit(2)

    configure_logging(args.verbose, args.quiet)
    try:
        config = RunConfig(args.config, overrides=overrides(args))
        logger.debug("Resolved configuration: %s", config.to_dict())
        results = COMMANDS[args.command](args, config)
        if results is not None:
            write(io.emit_results(results, args.format, config.to_dict()), args.out)
    except ValidationError as e:
        logger.error("%s: %s", type(e).__name__, e)
        sys.exit(2)
    except NumericalError as e:
        logger.error("%s: %s", type(e).__name__, e)
        sys.exit(3)
    except KeyboardInterrupt:
        print("Program canceled by user!", file=sys.stderr)
        sys.exit(1)

    # Exit
    print("Finished and exiting.", file=sys.stderr)
    sys.exit(0)


def add_args(parser):
    """
    Options shared by every subcommand, then one sub-parser per subcommand.
    """
    shared = ArgumentParser(add_help=False)
    shared.add_argument("--config", dest="config", default=None, help="YAML configuration file.", type=str)
    shared.add_argument("--seed", dest="seed", default=None, help="Master seed.", type=int)
    shared.add_argument("--n-jobs", dest="n_jobs", default=None,
                        help="joblib workers. IVQR_NUM_THREADS overrides it.", type=int)
    shared.add_argument("--out", dest="out", default=None, help="Output file. Default: standard output.", type=str)
    shared.add_argument("--format", dest="format", default="json", choices=["json", "csv"], help="Output format.")
    verbosity = shared.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", dest="verbose", action="store_true", help="Debug logging.")
    verbosity.add_argument("-q", "--quiet", dest="quiet", action="store_true", help="Warnings and errors only.")

    estimation = ArgumentParser(add_help=False)
    estimation.add_argument(dest="data", help="CSV file with columns cluster,y,x,w_1..,z_1..[,v].", type=str)
    estimation.add_argument("--no-intercept", dest="intercept", action="store_false",
                            help="Do not prepend a column of ones to W.")
    estimation.add_argument("--tau", dest="taus", nargs="+", default=None, type=float, help="Quantile index(es).")
    estimation.add_argument("--grid-min", dest="grid_min", default=None, type=float, help="Lower end of the grid.")
    estimation.add_argument("--grid-max", dest="grid_max", default=None, type=float, help="Upper end of the grid.")
    estimation.add_argument("--grid-step", "--step", dest="grid_step", default=None, type=float, help="Grid step.")
    estimation.add_argument("--instrument", dest="instrument", default=None,
                            choices=["parametric", "parametric-cluster", "np-full", "np-cluster"],
                            help="Instrument recipe.")
    estimation.add_argument("--a1", dest="a1", default="identity", choices=["identity", "phi"],
                            help="Weighting of the profile norm. Default=identity.")

    testing = ArgumentParser(add_help=False)
    testing.add_argument("--alpha", dest="alpha", default=None, type=float, help="Nominal level.")
    testing.add_argument("--mode", dest="mode", default=None, choices=["auto", "enumerate", "sample"],
                         help="Sign vectors: full enumeration or sampling.")
    testing.add_argument("--draws", dest="draws", default=None, type=int, help="Sampled sign vectors.")

    subparsers = parser.add_subparsers(dest="command")

    fit = subparsers.add_parser("fit", parents=[shared, estimation], help="Profiled IVQR estimates.")
    fit.add_argument("--profile-csv", dest="profile_csv", default=None,
                     help="Write the profile norm of every grid point to this CSV.", type=str)

    test = subparsers.add_parser("test", parents=[shared, estimation, testing], help="Hypothesis tests.")
    test.add_argument("--method", dest="methods", nargs="+", default=["T_CR"],
                      help="T, T_CR, AR, AR_CR, T_STD, IM, CRS (or lower case). Default=T_CR.")
    test.add_argument("--beta0", dest="beta0", required=True, type=float, help="Null value of beta(tau).")

    ci = subparsers.add_parser("ci", parents=[shared, estimation, testing], help="Confidence sets by test inversion.")
    ci.add_argument("--method", dest="methods", nargs="+", default=["T_CR"], help="Test(s) to invert.")

    simulate = subparsers.add_parser("simulate", parents=[shared, testing], help="Monte Carlo rejection tables.")
    simulate.add_argument("--dgp", dest="dgp", default=None, type=int, choices=[1, 2], help="Design.")
    simulate.add_argument("--n", dest="n", default=None, type=int, help="Observations.")
    simulate.add_argument("--J", dest="J", default=None, type=int, help="Clusters (DGP 1).")
    simulate.add_argument("--dz", dest="dz", default=None, type=int, help="Instruments (DGP 1).")
    simulate.add_argument("--pi", dest="pi", default=None, type=float, help="First stage strength (DGP 1).")
    simulate.add_argument("--r", dest="r", default=None, type=float, help="Cluster size heterogeneity (DGP 1).")
    simulate.add_argument("--L", dest="L", default=None, type=int, help="Spectral clusters (DGP 2).")
    simulate.add_argument("--adjacency-op", dest="adjacency_op", default=None, choices=["le", "as-written"],
                          help="Link nodes closer than the radius (le) or farther (as-written).")
    simulate.add_argument("--eigens", dest="eigens", default=None, choices=["largest", "smallest"],
                          help="Laplacian eigenvectors used by the spectral partition.")
    simulate.add_argument("--reps", dest="reps", default=None, type=int, help="Replications.")
    simulate.add_argument("--taus", dest="sim_taus", nargs="+", default=None, type=float, help="Quantile indices.")
    simulate.add_argument("--methods", dest="sim_methods", nargs="+", default=None, help="Tests to run.")
    simulate.add_argument("--grid-min", dest="grid_min", default=None, type=float, help="Lower end of the grid.")
    simulate.add_argument("--grid-max", dest="grid_max", default=None, type=float, help="Upper end of the grid.")
    simulate.add_argument("--grid-step", "--step", dest="grid_step", default=None, type=float, help="Grid step.")
    simulate.add_argument("--dump-data", dest="dump_data", default=None,
                          help="Write every generated dataset as CSV into this directory.", type=str)

    cluster = subparsers.add_parser("cluster", parents=[shared], help="Spectral partition of a network.")
    cluster.add_argument("--edges", dest="edges", required=True, help="Edge list (two node columns).", type=str)
    cluster.add_argument("--nodes", dest="nodes", default=None, type=int,
                         help="Number of nodes. Default: largest node id + 1.")
    cluster.add_argument("--L", dest="L", default=None, type=int, help="Groups in the largest component.")
    cluster.add_argument("--eigens", dest="eigens", default=None, choices=["largest", "smallest"],
                         help="Laplacian eigenvectors used by k-means.")

    return parser


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    warnings.simplefilter("default")


def overrides(args):
    """
    Nested configuration values given on the command line (None when absent).
    """
    def get(name):
        return getattr(args, name, None)

    adjacency_op = {"le": "le", "as-written": "ge", None: None}[get("adjacency_op")]
    sim_grid = None
    bounds = [get("grid_min"), get("grid_max"), get("grid_step")]
    if args.command == "simulate" and None not in bounds:
        sim_grid = bounds
    return {
        "seed": get("seed"),
        "n_jobs": get("n_jobs"),
        "taus": get("taus"),
        "instrument": {"method": get("instrument")},
        "grid": {"min": get("grid_min"), "max": get("grid_max"), "step": get("grid_step")},
        "test": {"alpha": get("alpha"), "mode": get("mode"), "draws": get("draws")},
        "cluster": {"L": get("L"), "eigens": get("eigens")},
        "simulation": {
            "dgp": get("dgp"), "n": get("n"), "J": get("J"), "dz": get("dz"), "pi": get("pi"), "r": get("r"),
            "L": get("L"), "adjacency_op": adjacency_op, "reps": get("reps"), "draws": get("draws"),
            "taus": get("sim_taus"), "methods": get("sim_methods"), "alpha": get("alpha"), "mode": get("mode"),
            "grid": sim_grid},
    }


def write(document, path):
    if path is None:
        sys.stdout.buffer.write(document)
        sys.stdout.flush()
    else:
        with open(path, "wb") as handle:
            handle.write(document)
        logger.info("Wrote %s.", path)


def _test_options(config):
    section = config["test"]
    return dict(
        alpha=float(section["alpha"]), mode=section["mode"], draws=int(section["draws"]), seed=int(config["seed"]),
        enumerate_max_j=int(section["enumerate_max_j"]),
        max_excluded_fraction=float(section["max_excluded_fraction"]),
        n_jobs=resolve_n_jobs(config["n_jobs"]))


def run_fit(args, config):
    """
    Estimate beta(tau) at every requested quantile index.
    """
    dataset = io.load_csv(args.data, add_intercept=args.intercept)
    taus = config["taus"]
    instruments = build_instruments(dataset, config.recipe(), taus)
    fit = estimate(dataset, instruments, config.grid(), args.a1, taus, resolve_n_jobs(config["n_jobs"]))
    for tau in fit.taus:
        logger.info("beta(%s) = %.4f%s", tau, fit[tau].beta, " (grid boundary)" if fit[tau].boundary else "")
    if args.profile_csv is not None:
        fit.profile_frame().to_csv(args.profile_csv, index=False)
    return [fit]


def run_tests(args, config):
    """
    Test ``beta(tau) = beta0`` with every requested method.
    """
    dataset = io.load_csv(args.data, add_intercept=args.intercept)
    taus = config["taus"]
    instruments = build_instruments(dataset, config.recipe(), taus, beta0=args.beta0)
    options = _test_options(config)
    fit = None
    results = list()
    for method in args.methods:
        method = normalize_method(method)
        if fit is None and method in ("T", "T_CR", "T_STD"):
            fit = estimate(dataset, instruments, config.grid(), args.a1, taus, options["n_jobs"])
        if method in ("T_STD", "IM", "CRS") and len(taus) > 1:
            for tau in taus:
                results.append(run_test(
                    method, dataset, instruments, args.beta0, [tau], grid=config.grid(), a1=args.a1, fit=fit,
                    **options))
            continue
        results.append(run_test(
            method, dataset, instruments, args.beta0, taus, grid=config.grid(), a1=args.a1, fit=fit, **options))
    for result in results:
        logger.info("%r", result)
    return results


def run_ci(args, config):
    """
    Invert every requested test over the grid, one set per quantile index.
    """
    dataset = io.load_csv(args.data, add_intercept=args.intercept)
    recipe = config.recipe()
    options = _test_options(config)
    results = list()
    for tau in config["taus"]:
        instruments = build_instruments(dataset, recipe, [tau])
        for method in args.methods:
            result = confidence_set(
                dataset, instruments, method, tau, grid=config.grid(), recipe=recipe, a1=args.a1, **options)
            logger.info("%r", result)
            results.append(result)
    return results


def run_simulate(args, config):
    """
    Monte Carlo rejection table for DGP 1 or DGP 2.
    """
    section = config["simulation"]
    if int(section["dgp"]) == 1:
        dgp = Dgp1Config(section["n"], section["J"], section["dz"], section["pi"], section["r"], config["seed"])
    else:
        dgp = Dgp2Config(
            section["n"], section["L"], config["seed"], section["adjacency_op"], config["cluster"]["eigens"])
    mc = McConfig(
        section["reps"], section["draws"], section["taus"], section["alpha"],
        [normalize_method(m) for m in section["methods"]],
        section["hypotheses"], section.get("grid"), section.get("mode", "auto"), config["seed"], config["n_jobs"])
    table = monte_carlo(dgp, mc, config.recipe(), args.dump_data)
    logger.info("%r", table)
    return [table]


def run_cluster(args, config):
    """
    Partition a network and write ``node,label``.
    """
    network = io.load_edges(args.edges, args.nodes)
    section = config["cluster"]
    partition = spectral_partition(
        network, int(section["L"]), seed=int(config["seed"]), eigens=section["eigens"], n_init=int(section["n_init"]),
        max_iter=int(section["max_iter"]), tol=float(section["tol"]),
        min_component_size=int(section["min_component_size"]))
    if args.out is None:
        sys.stdout.write(partition.asDataFrame().to_csv(index=False))
    else:
        io.dump_partition(partition, args.out)
    return None


COMMANDS = {
    "fit": run_fit,
    "test": run_tests,
    "ci": run_ci,
    "simulate": run_simulate,
    "cluster": run_cluster,
}


if __name__ == "__main__":
    try:
        main()
        sys.exit(0)
    except KeyboardInterrupt:
        print("Program canceled by user!")
        sys.exit(1)
