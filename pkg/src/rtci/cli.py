"""Command-line entry point.

Exit codes: 0 ok, 2 usage or parse error, 3 estimation failure, 4 test undefined.
Errors are reported on stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from rtci import __version__
from rtci._backend import BACKEND
from rtci.errors import EstimationError, ParseError, TestUndefinedError
from rtci.estimators import ModelSpec, Variant, beta_deltas, fit, sliding_beta_series
from rtci.graph import load_edge_list, write_edge_list
from rtci.inference import hausman_test
from rtci.panel import difference_rank, load_panel_csv, minmax_scale, top_k_by_rank, write_panel_csv
from rtci.synth import (
    GRAPH_MODELS,
    SynthConfig,
    draw_node_betas,
    run_trials,
    simulate_panel,
)

EXIT_OK, EXIT_USAGE, EXIT_ESTIMATION, EXIT_UNDEFINED = 0, 2, 3, 4
DEFAULT_GAMMAS = (1e-3, 1e-2, 1e-1, 1.0)


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_inputs(args):
    with open(args.edge_file, encoding="utf-8") as fh:
        g, tokens = load_edge_list(fh)
    with open(args.panel_file, encoding="utf-8") as fh:
        panel = load_panel_csv(fh, tokens)
    return g, tokens, panel


def _resolve_focal(token, tokens):
    if token is None:
        return None
    try:
        return tokens.index(token)
    except ValueError:
        raise UsageError(f"unknown focal node {token!r}") from None


def _model_spec(args, variant, focal):
    variant = Variant(variant)
    gamma = None
    if variant.family == "local":
        gamma = args.gamma
    if variant.family != "global" and focal is None:
        raise UsageError(f"variant {variant.value} requires --focal")
    return ModelSpec(
        variant, gamma=gamma, w=args.lag, focal=None if variant.family == "global" else focal,
        with_intercept=args.intercept, robust=args.robust_cov,
        include_focal=getattr(args, "include_focal", False),
    )


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _write_manifest(args, inputs, started):
    target = args.manifest
    if target is None and getattr(args, "out", None) not in (None, "-"):
        target = f"{args.out}.manifest.json"
    if target is None:
        return
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "version": __version__,
        "backend": BACKEND,
        "duration_s": time.perf_counter() - started,
    }
    Path(target).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def cmd_fit(args):
    g, tokens, panel = _load_inputs(args)
    focal = _resolve_focal(args.focal, tokens)
    res = fit(g, panel, _model_spec(args, args.variant, focal))
    out = res.to_dict()
    out["focal"] = args.focal
    with _output(args.out) as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    return [args.edge_file, args.panel_file]


def cmd_hausman(args):
    g, tokens, panel = _load_inputs(args)
    focal = _resolve_focal(args.focal, tokens)
    if focal is None:
        raise UsageError("hausman requires --focal")
    suffix = "_peer" if args.peer else ""
    local = fit(g, panel, _model_spec(args, "local_" + ("peer" if args.peer else "individual"), focal))
    ind = fit(g, panel, _model_spec(args, "individual" + suffix, focal))
    try:
        res = hausman_test(local, ind)
    except TestUndefinedError:
        with _output(args.out) as fh:
            json.dump({"status": "test_undefined", "focal": args.focal, "gamma": args.gamma}, fh)
            fh.write("\n")
        raise
    out = res.to_dict() | {"status": "ok", "focal": args.focal, "gamma": args.gamma}
    with _output(args.out) as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    return [args.edge_file, args.panel_file]


def _parse_window(text, t_max):
    """``START:END``, 1-based and inclusive, to a 0-based half-open pair."""
    if text is None:
        return None
    try:
        a, b = text.split(":")
        start, end = int(a), int(b)
    except ValueError:
        raise UsageError(f"--window must look like START:END, got {text!r}") from None
    if start < 1:
        start = t_max + start + 1 if start < 0 else start
    if not 1 <= start <= end <= t_max:
        raise UsageError(f"window {text} outside 1..{t_max}")
    return start - 1, end


def cmd_sliding(args):
    g, tokens, panel = _load_inputs(args)
    if args.scale:
        panel = panel.map_rows(minmax_scale)
    focal = _resolve_focal(args.focal, tokens)
    spec = _model_spec(args, args.variant, focal)
    series = sliding_beta_series(g, panel, spec, args.window, args.stride, on_error="skip")
    names = next((r.names for _, r in series if r is not None), None)
    if names is None:
        raise EstimationError("every window failed to fit")
    deltas = beta_deltas(series)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["t_start"] + list(names) + [f"stderr_{n}" for n in names]
            + [f"absdelta_{n}" for n in names]
        )
        for k, (start, r) in enumerate(series):
            if r is None:
                vals = [""] * (2 * len(names))
            else:
                vals = [_fmt(b) for b in r.beta] + [_fmt(s) for s in r.stderr]
            if k < len(deltas):
                vals += ["" if np.isnan(d) else _fmt(d) for d in deltas[k]]
            else:
                vals += [""] * len(names)
            writer.writerow([start + 1] + vals)
    return [args.edge_file, args.panel_file]


def _panel_tokens(path):
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return [row[0] for row in reader if row]


def cmd_diffrank(args):
    tokens = _panel_tokens(args.panel_file)
    if len(set(tokens)) != len(tokens):
        raise ParseError("duplicate node tokens in panel")
    with open(args.panel_file, encoding="utf-8") as fh:
        panel = load_panel_csv(fh, tokens)
    d = difference_rank(panel, _parse_window(args.window, panel.t_max))
    k = panel.n if args.top_k is None else args.top_k
    if not 1 <= k <= panel.n:
        raise UsageError(f"--top-k must lie in 1..{panel.n}")
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_token", "rank_value"])
        for i in top_k_by_rank(d, k):
            writer.writerow([tokens[i], _fmt(d[i])])
    return [args.panel_file]


def _graph_params(args):
    params = {}
    for item in args.graph_param or []:
        key, _, val = item.partition("=")
        if not _:
            raise UsageError(f"--graph-param expects key=value, got {item!r}")
        params[key] = float(val) if "." in val or "e" in val.lower() else int(val)
    defaults = {
        "erdos_renyi": {"p": 0.2},
        "watts_strogatz": {"k": 5, "p_rewire": 0.2},
        "barabasi_albert": {"power": 1, "m": 2},
    }[args.graph_model]
    return defaults | params


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_bench(args):
    config = SynthConfig(
        graph_model=args.graph_model, graph_params=_graph_params(args), n=args.n,
        scenario=args.scenario, true_beta_mean=args.beta_mean, noise_sd=args.noise_sd,
        seed=args.seed, fixed_graph=args.fixed_graph,
    )
    suffix = "_peer" if args.scenario == "peer" else ""
    estimators = [
        ModelSpec("local_" + ("peer" if suffix else "individual"), gamma=args.gamma, w=1, focal=0),
        ModelSpec("individual" + suffix, w=1, focal=0),
        ModelSpec("global" + suffix, w=1),
    ]
    t_grid = [int(t) for t in _parse_floats(args.tmax_grid)]
    report = run_trials(config, estimators, t_grid, args.trials, workers=args.workers)
    with _output(args.out) as fh:
        report.to_csv(fh)
    return []


def cmd_gamma_sweep(args):
    g, tokens, panel = _load_inputs(args)
    focals = [f for f in args.focal_list.split(",") if f]
    if not focals:
        raise UsageError("--focal-list is empty")
    gammas = _parse_floats(args.gammas) if args.gammas else list(DEFAULT_GAMMAS)
    variant = "local_peer" if args.peer else "local_individual"
    rows = []
    names = None
    for tok in focals:
        focal = _resolve_focal(tok, tokens)
        for gamma in gammas:
            spec = ModelSpec(variant, gamma=gamma, w=args.lag, focal=focal,
                             with_intercept=args.intercept, robust=args.robust_cov)
            res = fit(g, panel, spec)
            names = res.names
            rows.append([tok, _fmt(gamma)] + [_fmt(b) for b in res.beta] + [_fmt(s) for s in res.stderr])
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["focal", "gamma"] + list(names) + [f"stderr_{n}" for n in names])
        writer.writerows(rows)
    return [args.edge_file, args.panel_file]


def cmd_simulate(args):
    config = SynthConfig(
        graph_model=args.graph_model, graph_params=_graph_params(args), n=args.n,
        scenario=args.scenario, true_beta_mean=args.beta_mean, noise_sd=args.noise_sd,
        seed=args.seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence([args.seed]))
    g = config.make_graph(rng)
    b = draw_node_betas(g, rng, config.true_beta_mean)
    betas = b if args.scenario == "individual" else (b, draw_node_betas(g, rng, config.true_beta_mean))
    panel = simulate_panel(g, betas, args.scenario, args.tmax, args.noise_sd, rng)
    tokens = [f"n{i}" for i in range(g.n)]
    with open(args.edges_out, "w", encoding="utf-8") as fh:
        write_edge_list(g, fh, tokens)
    with open(args.panel_out, "w", encoding="utf-8", newline="") as fh:
        write_panel_csv(panel, fh, tokens)
    if args.betas_out:
        with open(args.betas_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if args.scenario == "individual":
                writer.writerow(["node", "beta"])
                writer.writerows([t, _fmt(v)] for t, v in zip(tokens, betas))
            else:
                writer.writerow(["node", "beta_I", "beta_P"])
                writer.writerows([t, _fmt(u), _fmt(v)] for t, u, v in zip(tokens, *betas))
    return []


def _add_model_flags(p, gamma_default=0.1):
    p.add_argument("--focal", help="focal node token")
    p.add_argument("--gamma", type=float, default=gamma_default)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--robust-cov", action="store_true")


def _add_synth_flags(p):
    p.add_argument("--graph-model", choices=GRAPH_MODELS, default="erdos_renyi")
    p.add_argument("--graph-param", action="append", metavar="KEY=VALUE",
                   help="p (ER), k and p_rewire (WS), power and m (BA)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--scenario", choices=("individual", "peer"), default="individual")
    p.add_argument("--beta-mean", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtci", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rtci {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--manifest", help="run manifest path (default OUT.manifest.json)")
        return p

    p = command("fit", cmd_fit, "fit one model variant")
    p.add_argument("edge_file")
    p.add_argument("panel_file")
    p.add_argument("variant", choices=[v.value for v in Variant])
    _add_model_flags(p)
    p.add_argument("--include-focal", action="store_true",
                   help="neighbors variants: pool the focal node too")

    p = command("hausman", cmd_hausman, "local vs individual specification test")
    p.add_argument("edge_file")
    p.add_argument("panel_file")
    _add_model_flags(p)
    p.add_argument("--peer", action="store_true")

    p = command("sliding", cmd_sliding, "window-by-window coefficients")
    p.add_argument("edge_file")
    p.add_argument("panel_file")
    p.add_argument("variant", choices=[v.value for v in Variant])
    _add_model_flags(p)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--scale", action="store_true", help="min-max scale every series first")

    p = command("diffrank", cmd_diffrank, "max-minus-min ranking of node series")
    p.add_argument("panel_file")
    p.add_argument("--window", help="START:END, 1-based inclusive; negative START counts from the end")
    p.add_argument("--top-k", type=int)

    p = command("bench", cmd_bench, "Monte Carlo MSE of local/individual/global estimators")
    _add_synth_flags(p)
    p.add_argument("--tmax-grid", default="10,30,50,100,200")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--fixed-graph", action="store_true")
    p.add_argument("--workers", type=int, default=None, help="default: $RTCI_THREADS or 1")

    p = command("gamma-sweep", cmd_gamma_sweep, "coefficients across a gamma grid")
    p.add_argument("edge_file")
    p.add_argument("panel_file")
    p.add_argument("--focal-list", required=True, help="comma-separated node tokens")
    p.add_argument("--gammas", help="comma-separated; default 1e-3,1e-2,1e-1,1")
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--peer", action="store_true")
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--robust-cov", action="store_true")

    p = command("simulate", cmd_simulate, "write a synthetic edge list and panel")
    _add_synth_flags(p)
    p.add_argument("--tmax", type=int, default=50)
    p.add_argument("--edges-out", required=True)
    p.add_argument("--panel-out", required=True)
    p.add_argument("--betas-out")
    return parser


def _fail(code, exc):
    json.dump({"error": type(exc).__name__, "message": str(exc), "exit_code": code}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        inputs = args.func(args)
    except TestUndefinedError as exc:
        return _fail(EXIT_UNDEFINED, exc)
    except EstimationError as exc:
        return _fail(EXIT_ESTIMATION, exc)
    except (UsageError, ParseError, ValueError, IndexError, OSError, UnicodeDecodeError) as exc:
        return _fail(EXIT_USAGE, exc)
    _write_manifest(args, inputs, started)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
