"""Command-line entry point: ``turbmimo {sweep,screens,modes,channel,validate}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import block_success, erasure_pattern_law, patterns, polarization_fidelity
from .config import ConfigError, SimConfig, format_config, load_config, with_overrides
from .experiment import default_workers, run_sweep, write_results
from .grid import inject_transfer_sign_flip, make_absorber
from .modes import build_banks
from .photons import distinguishable_stats, indistinguishable_stats
from .propagation import propagate_realization
from .turbulence import fried_parameter, rytov_variance, synthesize_screen_sequence, write_screen
from .validation import DEFAULT_SEED, format_report, run_checks

log = logging.getLogger("turbmimo")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "TURBMIMO_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _common(p: argparse.ArgumentParser, out_help: str):
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV}, then the config)")
    p.add_argument("--out", type=Path, help=out_help)
    verb = p.add_mutually_exclusive_group()
    verb.add_argument("--quiet", "-q", action="store_true", help="only report warnings and errors")
    verb.add_argument("--verbose", "-v", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turbmimo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("sweep", help="Monte Carlo sweep over cn2 and n; writes CSV plus metadata")
    _common(p, "CSV path (default: sweep.csv)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")

    p = sub.add_parser("screens", help="dump one realization's phase screens as text files")
    _common(p, "output directory (default: screens)")
    p.add_argument("--k", type=int, default=None, help="number of slabs to write (default: all)")
    p.add_argument("--cn2", type=float, default=1e-14, help="turbulence strength [m^-2/3]")
    p.add_argument("--subharmonics", action="store_true", help="add low-frequency subharmonics")

    p = sub.add_parser("modes", help="orthonormality diagnostics of the mode banks")
    _common(p, "report path (default: modes_n<N>.txt)")
    p.add_argument("--n", type=int, default=3, help="number of modes (2..5)")

    p = sub.add_parser("channel", help="single-realization crosstalk, erasure and pattern law")
    _common(p, "report path (default: channel_n<N>.txt)")
    p.add_argument("--cn2", type=float, default=1e-14, help="turbulence strength [m^-2/3]")
    p.add_argument("--n", type=int, default=2, help="number of modes (2..5)")
    p.add_argument("--index", type=int, default=0, help="realization index")

    p = sub.add_parser("validate", help="fast property checks; exit 0 iff all pass")
    _common(p, "also write the report here")
    p.add_argument("--inject-fault", choices=["sign-flip"], help="debug hook: corrupt the Fresnel transfer function")
    return parser


# ---------------------------------------------------------------- helpers


def _resolve_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}", EXIT_USAGE) from None


def _load(args) -> SimConfig:
    config = load_config(args.config) if args.config else SimConfig()
    if args.overrides:
        config = with_overrides(config, args.overrides)
    seed = _resolve_seed(args)
    if seed is not None:
        config = dataclasses.replace(config, master_seed=seed)
    return config


def _check_parent(path: Path):
    parent = path.resolve().parent
    if not parent.is_dir():
        raise CliError(f"output directory does not exist: {parent}", EXIT_IO)


def _write_text(path: Path, text: str):
    _check_parent(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from exc
    log.info("wrote %s", path)


def _fmt_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def _matrix_lines(name: str, m: np.ndarray, fmt=_fmt_complex) -> list[str]:
    lines = [f"[{name}]"]
    lines += ["  ".join(fmt(v) for v in row) for row in m]
    return lines


def _n_index(config: SimConfig, n: int) -> tuple[SimConfig, int]:
    if n not in (2, 3, 4, 5):
        raise CliError(f"--n must be one of 2, 3, 4, 5, got {n}", EXIT_USAGE)
    if n not in config.n_modes_sweep:
        config = dataclasses.replace(config, n_modes_sweep=tuple(config.n_modes_sweep) + (n,))
    return config, config.n_modes_sweep.index(n)


# ---------------------------------------------------------------- commands


def cmd_sweep(args) -> int:
    config = _load(args)
    out = args.out or Path("sweep.csv")
    _check_parent(out)
    workers = args.workers or default_workers()
    points = len(config.cn2_values()) * len(config.n_modes_sweep)
    log.info("sweep: %d points x %d realizations, %d worker(s)", points, config.n_mc, workers)
    log.debug("configuration:\n%s", format_config(config))

    done = [0]

    def progress(point, acc):
        done[0] += 1
        log.info("point %d/%d done: cn2=%.3e n=%d", done[0], points, acc.cn2, acc.n)

    start = time.perf_counter()
    rows = run_sweep(config, workers=workers, progress=progress)
    wall = time.perf_counter() - start
    try:
        meta = write_results(rows, out, config, wall)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc.strerror}", EXIT_IO) from exc
    log.info("wrote %d rows to %s (metadata %s) in %.1f s", len(rows), out, meta, wall)
    return EXIT_OK


def cmd_screens(args) -> int:
    config = _load(args)
    outdir = args.out or Path("screens")
    if not outdir.is_dir():
        raise CliError(f"output directory does not exist: {outdir}", EXIT_IO)
    params = config.params(args.cn2)
    k = params.n_slabs if args.k is None else args.k
    if not 1 <= k <= params.n_slabs:
        raise CliError(f"--k must lie in 1..{params.n_slabs}, got {k}", EXIT_USAGE)
    screens = synthesize_screen_sequence(
        config.grid(), params, config.master_seed, subharmonics=args.subharmonics or config.subharmonics
    )
    for screen in screens[:k]:
        path = outdir / f"screen_{screen.slab_index:03d}.txt"
        try:
            write_screen(screen, params, path)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from exc
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_modes(args) -> int:
    config = _load(args)
    _n_index(config, args.n)
    grid = config.grid()
    tx, rx = build_banks(args.n, config.waist, grid, config.path_length, config.wavelength)
    lines = [f"n = {args.n}", f"ell = {','.join(str(lab) for lab in tx.labels)}", f"waist = {config.waist!r}"]
    for name, bank in (("transmit_gram", tx), ("receiver_gram", rx)):
        g = bank.gram()
        lines += _matrix_lines(name, g)
        lines.append(f"{name}_max_deviation = {np.abs(g - np.eye(args.n)).max():.3e}")
    out = args.out or Path(f"modes_n{args.n}.txt")
    _write_text(out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_channel(args) -> int:
    config = _load(args)
    config, ni = _n_index(config, args.n)
    params = config.params(args.cn2)
    grid = config.grid()
    banks = build_banks(args.n, config.waist, grid, config.path_length, config.wavelength)
    absorber = make_absorber(grid, config.guard_fraction) if config.absorber else None
    screens = synthesize_screen_sequence(
        grid, params, config.master_seed, stream_key=(0, ni, args.index), subharmonics=config.subharmonics
    )
    _, t, ev = propagate_realization(banks, screens, params, absorber, realization_id=args.index)
    law = erasure_pattern_law([ev])
    sv = t.singular_values()
    lines = [
        f"cn2 = {args.cn2!r}",
        f"n = {args.n}",
        f"seed = {config.master_seed}",
        f"realization = {args.index}",
        f"fried_parameter = {fried_parameter(params)!r}",
        f"rytov_variance = {rytov_variance(params)!r}",
    ]
    lines += _matrix_lines("T", t.t)
    lines.append("singular_values = " + " ".join(f"{s:.17g}" for s in sv))
    lines.append(f"subunitary = {bool(sv.max() <= 1 + 1e-8)}")
    lines.append("eps = " + " ".join(f"{e:.17g}" for e in ev.eps))
    lines.append("[pattern_law]")
    lines += ["".join(map(str, s)) + f" {law.p(s):.17g}" for s in patterns(args.n)]
    lines.append(f"block_success = {block_success([ev]):.17g}")
    lines.append("fidelity_conditional = " + " ".join(f"{f:.17g}" for f in polarization_fidelity(t)))
    lines.append(
        "fidelity_unconditional = " + " ".join(f"{f:.17g}" for f in polarization_fidelity(t, conditional=False))
    )
    for stats in (distinguishable_stats(t), indistinguishable_stats(t)):
        lines.append(
            f"{stats.regime}: p_all_kept = {stats.p_all_kept:.17g} "
            f"p_collision_given_kept = {stats.p_collision_given_kept:.17g} p_collision = {stats.p_collision:.17g}"
        )
    out = args.out or Path(f"channel_n{args.n}.txt")
    _write_text(out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.config or args.overrides:
        _load(args)  # still reject malformed input
    seed = _resolve_seed(args)
    seed = DEFAULT_SEED if seed is None else seed
    if args.out is not None:
        _check_parent(args.out)
    if args.inject_fault == "sign-flip":
        with inject_transfer_sign_flip():
            results = run_checks(seed)
    else:
        results = run_checks(seed)
    report = format_report(results, seed)
    sys.stdout.write(report)
    if args.out is not None:
        _write_text(args.out, report)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "sweep": cmd_sweep,
    "screens": cmd_screens,
    "modes": cmd_modes,
    "channel": cmd_channel,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("%s: %s", exc.filename or "I/O error", exc.strerror or exc)
        return EXIT_IO
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
