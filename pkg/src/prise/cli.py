"""Command-line interface: ``prise <subcommand> [options]``.

Every subcommand writes CSV, JSON or F32T output. On failure a single line
``error code=<code> message=<text>`` goes to stderr and the exit status is 2.
"""

import argparse
import csv
import json
import sys

from .dataset import generate_dataset, load_base, load_dataset, spec_from_json
from .errors import InvalidConfig, PriseError
from .evaluation import DEFAULT_THRESHOLDS, StageLandscape, bound_report, evaluate, probe_landscape
from .featnet import NetConfig, load_weights, save_weights
from .imaging import PairSpec
from .lk import LkOptions
from .starconvex import StarConvexConfig, certify_star_convexity
from .tensorio import save_tensor
from .training import TrainConfig, train_all


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidConfig(f"expected comma-separated numbers, got {text!r}") from None


def _write_json(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _read_train_config(path, overrides):
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
    net_raw = raw.pop("net", {})
    sc = raw.pop("sc", {})
    if "lambda" in sc:
        sc["lam"] = sc.pop("lambda")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return NetConfig(**net_raw).validate(), TrainConfig(sc=StarConvexConfig(**sc), **raw)
    except TypeError as exc:
        raise InvalidConfig(f"bad training config: {exc}") from None


def cmd_gen_data(args):
    spec = spec_from_json(args.spec) if args.spec else PairSpec(
        canvas_size=96, box_size=32, template_size=64, max_offset=6.0)
    base = load_base(args.base) if args.base else None
    n = generate_dataset(args.out, spec, args.count, args.seed, base)
    print(f"wrote {n} pairs to {args.out}")


def cmd_train(args):
    net_config, config = _read_train_config(args.config, {"loss": args.loss, "seed": args.seed})
    dataset = load_dataset(args.data)
    net, histories = train_all(dataset, config, net_config)
    save_weights(net, args.out)
    history_path = args.history or args.out + ".history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "lk_loss", "hinge_eps", "hinge_xi", "total"])
        for h in histories:
            for r in h.records:
                writer.writerow([h.stage, r.epoch] + [repr(float(v)) for v in
                                                      (r.lk_loss, r.hinge_eps, r.hinge_xi, r.total)])
    print(f"trained {net.num_parameters()} parameters; history in {history_path}")


def _model(args):
    return None if args.weights in (None, "raw") else load_weights(args.weights)


def cmd_eval(args):
    model = _model(args)
    pairs = load_dataset(args.data)
    thresholds = _floats(args.thresholds) if args.thresholds else DEFAULT_THRESHOLDS
    opts = LkOptions(max_iters=args.max_iters)
    table = evaluate(model, opts, pairs, thresholds)
    table.to_csv(args.out)
    print(", ".join(f"SR@{t:g}={r:.2f}" for t, r in zip(table.thresholds, table.success_rates)))


def cmd_probe(args):
    model = _model(args)
    axes = [int(v) for v in args.axes.split(",")]
    if len(axes) != 2:
        raise InvalidConfig("--axes takes two indices i,j")
    pair = load_dataset(args.data, [args.pair])[0]
    grid = probe_landscape(model, pair, axes[0], axes[1], args.range, args.steps,
                           stage=args.stage, mode=args.mode)
    save_tensor(args.out, grid.values)
    print(f"center={grid.center!r} marker={grid.marker}")


def cmd_certify(args):
    model = _model(args)
    pair = load_dataset(args.data, [args.pair])[0]
    config = StarConvexConfig(mu=args.mu, lam=args.lam, radius=args.radius,
                              lambda_mode=args.lambda_mode, n_lambda=args.n_lambda)
    land = StageLandscape(model, pair, args.stage)
    report = certify_star_convexity(land, pair.omega_star, config, n_rays=args.samples, rng=args.seed)
    _write_json(args.out, report.as_dict())


def cmd_bound(args):
    model = _model(args)
    pair = load_dataset(args.data, [args.pair])[0]
    report = bound_report(model, pair, args.mu, stage=args.stage)
    _write_json(args.out, report.as_dict())


def build_parser():
    parser = argparse.ArgumentParser(prog="prise", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic pair dataset")
    p.add_argument("--base", help="base image (PGM or F32T); default: a fresh smooth image per pair")
    p.add_argument("--spec", help="PairSpec JSON; default canvas 96, box 32, template 64, offset 6")
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a feature network (stacked stage schedule)")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help='JSON with TrainConfig fields, "sc" and "net" sections')
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=["prise", "deeplk", "plain"])
    p.add_argument("--seed", type=int)
    p.add_argument("--history", help="per-epoch CSV (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    def model_args(p):
        p.add_argument("--data", required=True)
        p.add_argument("--weights", help='weights file, or "raw" for raw-image LK')
        p.add_argument("--stage", type=int, default=1)

    p = sub.add_parser("eval", help="success-rate table over a dataset")
    model_args(p)
    p.add_argument("--thresholds", help="comma-separated PE thresholds")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", help="2-D loss-landscape slice around the truth")
    model_args(p)
    p.add_argument("--pair", type=int, required=True)
    p.add_argument("--axes", default="0,1")
    p.add_argument("--range", type=float, default=4.0)
    p.add_argument("--steps", type=int, default=17)
    p.add_argument("--mode", choices=["corner", "matrix"], default="corner")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("certify", help="empirical strong star-convexity check")
    model_args(p)
    p.add_argument("--pair", type=int, required=True)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--lambda-mode", choices=["fixed", "sampled_max"], default="fixed")
    p.add_argument("--n-lambda", type=int, default=9)
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bound", help="near-optimality bound at the solver estimate")
    model_args(p)
    p.add_argument("--pair", type=int, required=True)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except PriseError as exc:
        print(f"error code={exc.code} message={exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error code=io_error message={exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
