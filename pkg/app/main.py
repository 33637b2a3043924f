"""
Command-line entry point for HVBK Spectral
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.core.config import settings, validate_configuration
from app.core.errors import HVBKError
from app.core.storage import load_frozen_constants, read_snapshot, write_report
from app.models.schemas import GevreyParams, VorticityFloorParams
from app.services.diagnostics import sigma_fit
from app.services.harness import apply_overrides, load_config, prepare_run, simulate
from app.services.verifier import verify_inv_mag_bound, verify_nonlinear_estimate

# Configure logging
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 4


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _write_if_requested(out: Optional[str], report: Dict[str, Any]) -> None:
    if out:
        write_report(out, report)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = apply_overrides(load_config(args.config), args.seed, args.steps, args.formulation)
    result = simulate(config, args.out)
    summary = result.summary()
    _emit({
        "stop_reason": summary.stop_reason.value,
        "t_final": summary.t_final,
        "steps": summary.steps,
        "T1": summary.T1,
        "delta": summary.delta,
        "torque_budget_used": summary.torque_budget_used,
        "momentum_drift": summary.momentum_drift,
    })
    return EXIT_OK


def cmd_verify_lemma(args: argparse.Namespace) -> int:
    frozen = load_frozen_constants(args.frozen)
    report = verify_nonlinear_estimate(
        args.K, args.trials, GevreyParams(p=args.p, sigma=args.sigma), args.seed, N=args.N, frozen=frozen,
    )
    payload = report.to_report()
    _write_if_requested(args.out, payload)
    _emit(payload)
    if not report.passed:
        logger.error(f"Max ratio {report.max_ratio:.6g} exceeds frozen bound {report.frozen_bound}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify_appendix(args: argparse.Namespace) -> int:
    vf = VorticityFloorParams(m_i=1.0, m_f=args.m_f, C0=args.C0, sigma0=args.sigma0)
    report = verify_inv_mag_bound(
        args.trials, vf, GevreyParams(p=args.p, sigma=args.sigma0), args.seed,
        N=args.N, epsilon=args.epsilon,
    )
    payload = report.to_report()
    _write_if_requested(args.out, payload)
    _emit(payload)
    if not report.passed:
        logger.error(f"Reciprocal bound failed: margins {report.min_margin}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_constants(args: argparse.Namespace) -> int:
    config = apply_overrides(load_config(args.config), seed=args.seed)
    inputs = prepare_run(config)
    _emit({
        **inputs.ledger.model_dump(),
        "m_i": inputs.vf.m_i,
        "m_f": inputs.vf.m_f,
        "dt": inputs.controls.dt,
    })
    return EXIT_OK


def cmd_fit_sigma(args: argparse.Namespace) -> int:
    if not os.path.exists(args.snapshot):
        logger.error(f"Snapshot not found: {args.snapshot}")
        return EXIT_PRECONDITION
    snapshot = read_snapshot(args.snapshot)
    if args.field not in snapshot.fields:
        logger.error(f"Snapshot has no field '{args.field}'; available: {sorted(snapshot.fields)}")
        return EXIT_PRECONDITION
    _emit({"field": args.field, "N": snapshot.N, "sigma_fit": sigma_fit(snapshot.fields[args.field])})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvbk", description="HVBK pseudospectral simulator and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Run the integrator and write diagnostics")
    p.add_argument("--config", required=True, help="Path to a JSON run config")
    p.add_argument("--out", default=None, help="Output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="Step cap override")
    p.add_argument("--formulation", choices=["velocity", "vorticity"], default=None)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("verify-lemma", help="Check the multilinear estimate against the frozen constant")
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--p", type=float, default=2.5)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frozen", default=None, help="Frozen-constant fixture path")
    p.add_argument("--out", default=None, help="Report path")
    p.set_defaults(handler=cmd_verify_lemma)

    p = sub.add_parser("verify-appendix", help="Check the reciprocal-magnitude bound")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--p", type=float, default=2.6)
    p.add_argument("--sigma0", type=float, default=0.1)
    p.add_argument("--m-f", dest="m_f", type=float, default=0.5)
    p.add_argument("--C0", type=float, default=1.0)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--out", default=None, help="Report path")
    p.set_defaults(handler=cmd_verify_appendix)

    p = sub.add_parser("constants", help="Print the ledger constants of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_constants)

    p = sub.add_parser("fit-sigma", help="Fit the analyticity radius of a snapshot field")
    p.add_argument("snapshot")
    p.add_argument("--field", default="omega_s")
    p.set_defaults(handler=cmd_fit_sigma)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and dispatch a subcommand

    Returns:
        Exit code: 0 success, 2 precondition, 3 singularity, 4 numerical
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        validate_configuration()
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_PRECONDITION

    logger.debug(f"Starting {settings.APP_NAME} v{settings.APP_VERSION}: {args.command}")
    try:
        return args.handler(args)
    except HVBKError as e:
        logger.error(f"{e.error_type}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Validation error: {e}")
        return EXIT_PRECONDITION


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
