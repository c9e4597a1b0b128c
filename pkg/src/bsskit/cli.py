"""``bss`` command line.

Exit codes: 0 success, 2 when some sweep cells/trials failed, 1 on a fatal
configuration or input error.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .io import read_matrix, write_json, write_matrix


class CliError(Exception):
    pass


def _out_dir(args) -> Path:
    if not args.out:
        raise CliError("--out is required")
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_spec(args):
    from .bench import ExperimentSpec

    if not args.spec:
        raise CliError("--spec is required")
    with open(args.spec) as fh:
        d = json.load(fh)
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.out:
        d["output_dir"] = args.out
    return ExperimentSpec.from_dict(d)


def _parse_params(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise CliError(f"--param expects key=value, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _emit(obj, args, name):
    if args.out:
        write_json(_out_dir(args) / name, obj)
    else:
        json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=float)
        sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args):
    from .bench import GENERATORS

    params = _parse_params(args.param)
    op = args.generator
    if args.spec:
        with open(args.spec) as fh:
            d = json.load(fh)
        ref = d.get("generator", d)
        op, params = ref["op"], {**ref.get("params", {}), **params}
    if op not in GENERATORS:
        raise CliError(f"unknown generator {op!r}; expected one of {sorted(GENERATORS)}")
    seed = 0 if args.seed is None else args.seed
    prob = GENERATORS[op](seed=seed, **params)
    out = _out_dir(args)
    ext = "." + args.format
    probs = prob if isinstance(prob, list) else [prob]
    for i, p in enumerate(probs):
        pre = f"subject{i:02d}_" if isinstance(prob, list) else ""
        if hasattr(p, "truth"):
            write_matrix(out / f"{pre}X{ext}", p.data)
            write_json(out / f"{pre}truth.json", p.truth.to_dict())
            continue
        if np.ndim(p.observations) == 3:
            for k in range(p.observations.shape[0]):
                write_matrix(out / f"X{k:02d}{ext}", p.observations[k])
                write_matrix(out / f"A{k:02d}{ext}", p.mixing[k])
                write_matrix(out / f"S{k:02d}{ext}", p.sources[k])
            continue
        write_matrix(out / f"{pre}X{ext}", p.observations)
        write_matrix(out / f"{pre}A{ext}", p.mixing)
        write_matrix(out / f"{pre}S{ext}", p.sources)
    write_json(out / "gen.json", {"generator": op, "params": params, "seed": seed, "version": __version__})
    return 0


def cmd_fit_density(args):
    from .maxent import fit_emk

    x = read_matrix(args.input).ravel()
    d = fit_emk(x, max_local=args.max_local)
    _emit(d.to_dict(), args, "density.json")
    if args.out:
        xs, _ = d.grid()
        with open(_out_dir(args) / "density_grid.csv", "w") as fh:
            fh.write("x,p\n")
            for a, b in zip(xs, np.exp(d.logpdf(xs))):
                fh.write(f"{float(a)!r},{float(b)!r}\n")
    return 0


def cmd_fit_mggd(args):
    from .mggd import estimate_joint, estimate_scatter

    data = read_matrix(args.input)
    if args.beta is not None:
        if args.method == "mom":
            raise CliError("--method mom estimates the shape; drop --beta")
        rep = estimate_scatter(data, args.beta, method=args.method, tol=args.tol, max_iter=args.max_iter, eps=args.eps)
    else:
        rep = estimate_joint(data, method=args.method, tol=args.tol, max_iter=args.max_iter, eps=args.eps)
    _emit(rep.to_dict(), args, "mggd_fit.json")
    return 0


def cmd_probe(args):
    from .mggd import nonexpansivity_probe

    data = read_matrix(args.input)
    grid = [float(s) for s in args.sigma_grid.split(",")]
    d = nonexpansivity_probe(data, args.beta, grid)
    out = {"sigma_grid": grid, "beta": args.beta, "probe": d.tolist(), "max": float(d.max())}
    if args.out:
        write_matrix(_out_dir(args) / "probe.csv", d)
    _emit(out, args, "probe.json")
    return 0


def _ica_common(args):
    from .ica import IcaConfig

    return IcaConfig(
        max_iter=args.max_iter,
        tol=args.tol,
        lag=args.lag,
        density=args.density,
        parallel_rows=args.parallel_rows,
        n_workers=max(1, args.threads or 1),
        seed=0 if args.seed is None else args.seed,
    )


def _write_demix(args, x, w_white, wh, z, state, extra=None):
    out = _out_dir(args)
    w = w_white @ wh
    write_matrix(out / "W.csv", w)
    write_matrix(out / "Y.csv", w_white @ z)
    rec = state.to_dict()
    rec["w_original"] = w.tolist()
    if extra:
        rec.update(extra)
    write_json(out / "state.json", rec)


def cmd_ica(args):
    from .ica import run_ica_emk, whiten, whitening_matrix

    x = read_matrix(args.input)
    z, dw = whiten(x, args.n_components)
    st = run_ica_emk(z, _ica_common(args))
    _write_demix(args, x, st.w, whitening_matrix(dw), z, st)
    return 0


def cmd_sparse_ica(args):
    from .ica import SparseConfig, run_sparse_ica, whiten, whitening_matrix

    x = read_matrix(args.input)
    z, dw = whiten(x, args.n_components)
    cfg = SparseConfig(base=_ica_common(args), lam=args.lam, eps=args.eps)
    st = run_sparse_ica(z, cfg)
    _write_demix(args, x, st.w, whitening_matrix(dw), z, st)
    return 0


def cmd_iva(args):
    from .iva import IvaConfig, run_iva_aggd

    files = sorted(glob.glob(args.datasets))
    if not files:
        raise CliError(f"no files match {args.datasets!r}")
    stack = [read_matrix(f) for f in files]
    cfg = IvaConfig(method=args.method, tol=args.tol, max_iter=args.max_iter, seed=0 if args.seed is None else args.seed)
    st = run_iva_aggd(stack, cfg)
    out = _out_dir(args)
    for k, f in enumerate(files):
        write_matrix(out / f"W{k:02d}.csv", st.w[k])
    rec = st.to_dict()
    rec["datasets"] = files
    write_json(out / "state.json", rec)
    return 0


def cmd_score(args):
    from . import metrics as M

    res = {}
    if args.w and args.a:
        ws = sorted(glob.glob(args.w))
        as_ = sorted(glob.glob(args.a))
        if len(ws) != len(as_) or not ws:
            raise CliError("--w and --a must match the same number of files")
        gs = [read_matrix(w) @ read_matrix(a) for w, a in zip(ws, as_)]
        if len(gs) == 1:
            res.update(isi=M.isi(gs[0]), isr=M.isr(gs[0]), isr_norm=M.isr(gs[0], normalized=True))
        else:
            res.update(isi_avg=M.isi_avg(gs), isi_jnt=M.isi_jnt(gs))
    if args.s_true and args.s_est:
        perm, corr = M.pair_correlation(read_matrix(args.s_true), read_matrix(args.s_est))
        res.update(corr_mean=float(np.mean(corr)), corr=corr.tolist(), perm=perm.tolist())
        res["gini"] = float(np.mean([M.gini(r) for r in read_matrix(args.s_est)]))
    if not res:
        raise CliError("give --w/--a and/or --s-true/--s-est")
    _emit(res, args, "score.json")
    return 0


def _finish(res):
    return 2 if res.n_errors else 0


def cmd_bench(args):
    from .bench import run_experiment

    spec = _load_spec(args)
    res = run_experiment(spec, threads=args.threads or 1, resume=not args.no_resume)
    for key, agg in res.aggregates.items():
        print(key, " ".join(f"{m}={agg[m]['mean']:.4g}" for m in spec.metrics), f"errors={agg['n_error']}")
    for w in res.win_rates:
        print(f"win_rate {w['a']} vs {w['b']} on {w['metric']}: {w['win_rate']:.3f}")
    return _finish(res)


def cmd_repro(args):
    from .bench import accuracy_surface, repro_protocol

    spec = _load_spec(args)
    fn = accuracy_surface if args.accuracy else repro_protocol
    surfs, res = fn(spec, threads=args.threads or 1)
    for name, s in surfs.items():
        print(name, "min", np.nanmin(s["values"]), "max", np.nanmax(s["values"]))
    return _finish(res)


def cmd_speedup(args):
    from .bench import available_cores, measure_speedup

    params = {}
    if args.spec:
        with open(args.spec) as fh:
            params = json.load(fh)
    cores = [int(c) for c in args.cores.split(",")] if args.cores else params.get("core_counts", [1, available_cores()])
    sizes = [int(c) for c in args.sizes.split(",")] if args.sizes else params.get("sizes", [2, 4, 8, 16, 32])
    rows = measure_speedup(
        cores,
        sizes,
        n_samples=params.get("n_samples", args.n_samples),
        n_iter=params.get("n_iter", args.n_iter),
        seed=0 if args.seed is None else args.seed,
    )
    res = {"rows": rows, "available_cores": available_cores(), "version": __version__}
    if args.out:
        out = _out_dir(args)
        keys = list(rows[0])
        with open(out / "speedup.csv", "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in rows:
                fh.write(",".join(str(r[k]) for k in keys) + "\n")
        write_json(out / "result.json", res)
    for r in rows:
        print(f"N={r['n_sources']} cores={r['cores']} speedup={r['speedup']:.3f} amdahl={r['amdahl_rows']:.3f} identical={r['identical']}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bss", description="Blind source separation toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="experiment spec (JSON)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--threads", type=int, default=1, help="concurrency cap")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic problem")
    g.add_argument("--generator", default="ggd_mixture")
    g.add_argument("--param", action="append", help="generator parameter key=value (JSON value)")
    g.add_argument("--format", choices=("csv", "mat64"), default="csv")
    g.set_defaults(fn=cmd_gen)

    f = sub.add_parser("fit-density", parents=[common], help="EMK max-entropy density of a sample")
    f.add_argument("--input", required=True)
    f.add_argument("--max-local", type=int, default=5)
    f.set_defaults(fn=cmd_fit_density)

    m = sub.add_parser("fit-mggd", parents=[common], help="MGGD parameter estimation")
    m.add_argument("--input", required=True, help="K x T data matrix")
    m.add_argument("--method", choices=("mom", "mlfp", "mlfs", "rafp", "fp-eps"), default="rafp")
    m.add_argument("--beta", type=float, help="known shape (scatter-only fit)")
    m.add_argument("--tol", type=float, default=1e-6)
    m.add_argument("--max-iter", type=int, default=500)
    m.add_argument("--eps", type=float, default=0.01)
    m.set_defaults(fn=cmd_fit_mggd)

    pr = sub.add_parser("probe-nonexpansive", parents=[common], help="fixed-point contraction surface")
    pr.add_argument("--input", required=True)
    pr.add_argument("--beta", type=float, required=True)
    pr.add_argument("--sigma-grid", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    pr.set_defaults(fn=cmd_probe)

    for name, fn in (("ica", cmd_ica), ("sparse-ica", cmd_sparse_ica)):
        a = sub.add_parser(name, parents=[common], help=f"run {name}")
        a.add_argument("--input", required=True, help="N x V (or M x V) observations")
        a.add_argument("--n-components", type=int)
        a.add_argument("--density", choices=("emk", "tanh"), default="emk")
        a.add_argument("--lambda", dest="lam", type=float, default=1e4 if name == "sparse-ica" else 0.0)
        a.add_argument("--eps", type=float, default=1e-2)
        a.add_argument("--max-iter", type=int, default=512)
        a.add_argument("--tol", type=float, default=1e-6)
        a.add_argument("--lag", type=int, default=8)
        a.add_argument("--parallel-rows", action="store_true")
        a.set_defaults(fn=fn)

    v = sub.add_parser("iva", parents=[common], help="IVA with adaptive MGGD sources")
    v.add_argument("--datasets", required=True, help="glob of N x V matrices")
    v.add_argument("--method", choices=("mom", "mlfs", "rafp"), default="rafp")
    v.add_argument("--tol", type=float, default=1e-4)
    v.add_argument("--max-iter", type=int, default=100)
    v.set_defaults(fn=cmd_iva)

    s = sub.add_parser("score", parents=[common], help="separation metrics")
    s.add_argument("--w", help="demixing matrix file (glob for several datasets)")
    s.add_argument("--a", help="mixing matrix file (glob, same order)")
    s.add_argument("--s-true")
    s.add_argument("--s-est")
    s.set_defaults(fn=cmd_score)

    b = sub.add_parser("bench", parents=[common], help="run an experiment spec")
    b.add_argument("--no-resume", action="store_true")
    b.set_defaults(fn=cmd_bench)

    r = sub.add_parser("repro", parents=[common], help="split-half reproducibility surface")
    r.add_argument("--accuracy", action="store_true", help="accuracy surface against the true maps instead")
    r.set_defaults(fn=cmd_repro)

    sp = sub.add_parser("speedup", parents=[common], help="parallel row-update speedup")
    sp.add_argument("--cores", help="comma-separated core counts")
    sp.add_argument("--sizes", help="comma-separated source counts")
    sp.add_argument("--n-samples", type=int, default=1000)
    sp.add_argument("--n-iter", type=int, default=5)
    sp.set_defaults(fn=cmd_speedup)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("bss: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return int(args.fn(args))
    except (CliError, ValueError, KeyError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"bss {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
