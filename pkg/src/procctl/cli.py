"""Command-line front end.

Exit codes
----------
0  success (optimize: converged or reached max_iters)
1  bad configuration, target spec or checkpoint
2  simulate: oracle validation or process invariants failed
3  optimize: monotonicity could not be restored (nonmonotonic abort)
4  optimize: the per-step field equation failed to converge
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NONMONOTONIC, EXIT_STEP = 0, 1, 2, 3, 4

log = logging.getLogger("procctl")


def _limit_threads():
    n = os.environ.get("PROCCTL_THREADS")
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=int(n))


GNUPLOT = {
    "trajectory.csv": "set datafile separator ','\nset key autotitle columnhead\n"
    "set xlabel 't (ns)'\nplot 'trajectory.csv' using 1:2 with lines, '' using 1:5 with lines\n",
    "pulses.csv": "set datafile separator ','\nset key autotitle columnhead\n"
    "set xlabel 't (ns)'\nset ylabel 'rad/ns'\nplot for [c=2:3] 'pulses.csv' using 1:c with lines\n",
    "convergence.csv": "set datafile separator ','\nset key autotitle columnhead\n"
    "set xlabel 'iteration'\nplot 'convergence.csv' using 1:(-$3) with lines title '-F', "
    "'' using 1:(-$2) with lines title '-J'\n",
}


def _write_snippets(outdir, names):
    for name in names:
        if name in GNUPLOT:
            with open(os.path.join(outdir, name.replace(".csv", ".gp")), "w") as fh:
                fh.write(GNUPLOT[name])
        elif name.startswith("spectrum_"):
            with open(os.path.join(outdir, name.replace(".csv", ".gp")), "w") as fh:
                fh.write(
                    "set datafile separator ','\nset key autotitle columnhead\n"
                    f"set xlabel 'omega (rad/ns)'\nplot '{name}' using 1:2 with lines\n"
                )


def _outdir(setup, args):
    d = args.out or setup.output["directory"]
    os.makedirs(d, exist_ok=True)
    return d


def _load(path):
    from .config import load_config

    return load_config(path).build()


def _write_fields_outputs(outdir, fields_arr, guess, grid, window, written):
    from .fields import pulse_spectrum, write_pulse_csv, write_spectrum_csv

    cur = [g.with_samples(fields_arr[m]) for m, g in enumerate(guess)]
    write_pulse_csv(os.path.join(outdir, "pulses.csv"), cur, grid)
    written.append("pulses.csv")
    for f in cur:
        omega, mag = pulse_spectrum(f, grid, window)
        name = f"spectrum_{f.name}.csv"
        write_spectrum_csv(os.path.join(outdir, name), omega, mag)
        written.append(name)


def run_simulate(config_path, out=None, gnuplot=False):
    from .dynamics import ProcessMatrix, propagate, validate_against_state_equation
    from .errors import ProcctlError
    from .io import write_process

    try:
        setup = _load(config_path)
    except (ProcctlError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args = argparse.Namespace(out=out)
    outdir = _outdir(setup, args)
    fields = np.array([f.samples for f in setup.fields])
    traj = propagate(setup.model, fields, setup.grid, basis=setup.basis)
    written = []
    traj.write_csv(os.path.join(outdir, "trajectory.csv"), setup.objective.target)
    written.append("trajectory.csv")
    chi_f = ProcessMatrix(setup.basis, traj.final)
    write_process(os.path.join(outdir, "process_final.json"), chi_f)
    _write_fields_outputs(outdir, fields, setup.fields, setup.grid, setup.output["spectrum_window"], written)
    fid = -setup.objective.value(traj.final)
    print(f"terminal fidelity -F = {fid:.6f}")
    code = EXIT_OK
    violations = []
    for k in range(len(traj)):
        v = traj.process(k).violations(herm_tol=1e-9, psd_tol=1e-8, trace_tol=1e-8)
        if v:
            violations.append({"k": k, "problems": v})
    report = {"terminal_fidelity": fid, "invariant_violations": violations[:20]}
    n_samples = setup.validation["oracle_samples"]
    if n_samples:
        rep = validate_against_state_equation(
            setup.model,
            fields,
            setup.grid,
            n_samples,
            setup.basis,
            seed=setup.validation["seed"],
            tolerance=setup.validation["oracle_tolerance"],
            trajectory=traj,
        )
        report["oracle"] = rep.to_dict()
        print(f"oracle: max trace distance {rep.max_trace_distance:.3e} over {n_samples} states "
              f"({'pass' if rep.passed else 'FAIL'} at {rep.tolerance:g})")
        if not rep.passed:
            code = EXIT_VALIDATION
    if violations:
        print(f"process invariants violated at {len(violations)} grid points", file=sys.stderr)
        code = EXIT_VALIDATION
    with open(os.path.join(outdir, "validation.json"), "w") as fh:
        json.dump(report, fh, indent=1)
    if gnuplot or setup.output["gnuplot_snippets"]:
        _write_snippets(outdir, written)
    return code


def run_optimize(config_path, out=None, resume=None, max_iters=None, gnuplot=False, checkpoint_every=None):
    from dataclasses import replace

    from .dynamics import ProcessMatrix
    from .errors import ConfigError, NonmonotonicAbort, ProcctlError, StepFailure
    from .io import write_process
    from .krotov import load_checkpoint, optimize, write_convergence_csv

    try:
        setup = _load(config_path)
        ck = load_checkpoint(resume) if resume else None
    except (ProcctlError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = setup.krotov
    if max_iters is not None:
        cfg = replace(cfg, max_iters=max_iters)
    if checkpoint_every is not None:
        cfg = replace(cfg, checkpoint_every=checkpoint_every)
    outdir = _outdir(setup, argparse.Namespace(out=out))
    ckpath = os.path.join(outdir, "checkpoint.json")

    def report(rec):
        log.info("n=%d J=%.10f F=%.10f A=%.4e retries=%d", rec.n, rec.J, rec.F, rec.A_n, rec.retries)

    code = EXIT_OK
    try:
        run = optimize(
            setup.model,
            setup.grid,
            setup.fields,
            setup.objective,
            cfg,
            basis=setup.basis,
            checkpoint_path=ckpath,
            resume=ck,
            meta={"config": os.path.abspath(config_path)},
            callback=report,
        )
        records, rejected = run.records, run.rejected
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonmonotonicAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        write_convergence_csv(os.path.join(outdir, "convergence.csv"), [r for r in exc.records if r.accepted])
        return EXIT_NONMONOTONIC
    except StepFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP
    written = ["convergence.csv"]
    write_convergence_csv(os.path.join(outdir, "convergence.csv"), records)
    write_convergence_csv(os.path.join(outdir, "rejected.csv"), rejected)
    _write_fields_outputs(outdir, run.fields, setup.fields, setup.grid, setup.output["spectrum_window"], written)
    write_process(os.path.join(outdir, "process_final.json"), ProcessMatrix(setup.basis, run.forward.final))
    print(f"iterations {run.iteration}: -F {-records[0].F:.6f} -> {-records[-1].F:.6f}"
          f"{' (converged)' if run.converged else ''}")
    if gnuplot or setup.output["gnuplot_snippets"]:
        _write_snippets(outdir, written)
    return code


def cmd_simulate(args):
    return _fan_out(run_simulate, args.config, args.jobs, out=args.out, gnuplot=args.gnuplot_snippets)


def cmd_optimize(args):
    if args.resume and len(args.config) > 1:
        print("error: --resume takes a single config", file=sys.stderr)
        return EXIT_CONFIG
    return _fan_out(
        run_optimize,
        args.config,
        args.jobs,
        out=args.out,
        resume=args.resume,
        max_iters=args.max_iters,
        gnuplot=args.gnuplot_snippets,
        checkpoint_every=args.checkpoint_every,
    )


def _fan_out(fn, configs, jobs, out=None, **kw):
    """Run independent configs, in parallel when ``jobs > 1``; return the worst exit code."""
    if len(configs) > 1 and out is not None:
        outs = [os.path.join(out, os.path.splitext(os.path.basename(c))[0]) for c in configs]
    else:
        outs = [out] * len(configs)
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            codes = list(ex.map(_call, [(fn, c, o, kw) for c, o in zip(configs, outs)]))
    else:
        codes = [fn(c, out=o, **kw) for c, o in zip(configs, outs)]
    return max(codes)


def _call(item):
    fn, c, o, kw = item
    return fn(c, out=o, **kw)


def cmd_target(args):
    from .basis import basis_change, build_gell_mann_basis, build_logical_basis
    from .dynamics import ProcessMatrix
    from .config import build_target
    from .errors import ProcctlError
    from .io import write_process
    from .rydberg import RydbergParams

    basis = build_gell_mann_basis(4)
    try:
        chi = build_target(args.spec, basis, params=RydbergParams(frame=args.frame))
    except (ProcctlError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.basis == "logical":
        logical = build_logical_basis(4)
        out = ProcessMatrix(logical, basis_change(basis, logical).apply(chi))
    else:
        out = ProcessMatrix(basis, chi)
    d = os.path.dirname(args.output)
    if d:
        os.makedirs(d, exist_ok=True)
    write_process(args.output, out)
    return EXIT_OK


def cmd_dump_preset(args):
    from .config import dump_config, preset_config
    from .errors import ProcctlError

    try:
        data = preset_config(args.name, n_steps=args.n_steps, frame=args.frame, max_iters=args.max_iters)
    except ProcctlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = dump_config(data, None if args.output == "-" else args.output)
    if args.output == "-":
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="procctl", description="Process-matrix optimal control in Lindblad form.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="propagate the process matrix under the configured fields")
    s.add_argument("config", nargs="+")
    s.add_argument("--out", help="output directory (overrides output.directory)")
    s.add_argument("--jobs", type=int, default=1, help="parallel workers for several configs")
    s.add_argument("--gnuplot-snippets", action="store_true")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("optimize", help="run the Krotov optimization")
    o.add_argument("config", nargs="+")
    o.add_argument("--out")
    o.add_argument("--resume", metavar="CHECKPOINT")
    o.add_argument("--max-iters", type=int)
    o.add_argument("--checkpoint-every", type=int)
    o.add_argument("--jobs", type=int, default=1)
    o.add_argument("--gnuplot-snippets", action="store_true")
    o.set_defaults(func=cmd_optimize)

    t = sub.add_parser("target", help="write a target process matrix")
    t.add_argument("spec", help="gate:identity | gate:phase:pi | decoherence:tf=500 | depolarizing:tf=900")
    t.add_argument("output")
    t.add_argument("--frame", choices=["literal", "absorbed"], default="literal")
    t.add_argument("--basis", choices=["gell-mann", "logical"], default="gell-mann")
    t.set_defaults(func=cmd_target)

    d = sub.add_parser("dump-preset", help="write a scenario preset as an editable config")
    d.add_argument("name", help="gate-simulation | decoherence-suppression | passive-environment (or I, II, III)")
    d.add_argument("output", help="file path, or - for stdout")
    d.add_argument("--n-steps", type=int)
    d.add_argument("--frame", choices=["literal", "absorbed"])
    d.add_argument("--max-iters", type=int)
    d.set_defaults(func=cmd_dump_preset)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads()
    try:
        return args.func(args)
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
