"""Command-line entry point: ``osdl <command> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, groups
from .config import RunConfig
from .data import (RatingDataset, file_sha256, gen_synthetic, load_cells, load_jester, save_cells,
                   save_jester, subsample_users, user_stream)
from .evaluation import (GridSpec, HeldOutCells, code_users, grid_search, item_mean_baseline, mae,
                         parse_structure, read_trials_csv, rmse, select_correction, split,
                         surfaces, write_curve_csv, write_json, write_surfaces_csv,
                         write_trials_csv)
from .coder import CoderConfig
from .io import load_dictionary, save_dictionary
from .learner import train
from .recommender import CorrectionConfig, UnratableUser, predict_user, similarity_matrix

logger = logging.getLogger("osdl")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _global_flags(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=default, help="run configuration (JSON)")
    p.add_argument("--seed", type=int, metavar="U64", default=default, help="override every seed")
    p.add_argument("--workers", type=int, metavar="N", default=default if suppress else 1,
                   help="parallel trials for 'grid'")
    p.add_argument("--dump-groups", action="store_true",
                   default=argparse.SUPPRESS if suppress else False,
                   help="write the configured group structure (stdout, or groups.txt)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="osdl", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    p = command("train", "train a dictionary on the training split")
    p.add_argument("--dataset", nargs="+", metavar="CSV", help="Jester CSV file(s)")
    p.add_argument("--out", metavar="DIR", help="output directory")

    p = command("predict", "predict held-out cells with a trained dictionary")
    p.add_argument("--dictionary", required=True, metavar="PATH")
    p.add_argument("--ratings", required=True, metavar="CSV",
                   help="known ratings: Jester CSV or 'user,item,rating' cells")
    p.add_argument("--cells", metavar="CSV", help="cells to predict (default: every unrated item)")
    p.add_argument("--out", required=True, metavar="CSV")

    p = command("evaluate", "score predictions against true ratings")
    p.add_argument("--predictions", required=True, metavar="CSV")
    p.add_argument("--truth", required=True, metavar="CSV")
    p.add_argument("--column", default="corrected_estimate",
                   choices=["estimate", "corrected_estimate"])

    p = command("grid", "hyperparameter sweep")
    p.add_argument("--dataset", nargs="+", metavar="CSV")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--budget", type=int, metavar="N", help="run at most N trials")

    p = command("report", "turn a trial CSV into surface CSVs")
    p.add_argument("--trials", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")

    p = command("gen", "write a synthetic dataset")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--items", type=int, default=20)
    p.add_argument("--structure", default="tree:4")
    p.add_argument("--sparsity", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--missing", type=float, default=0.3)
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _load_dataset(cfg: RunConfig, override=None):
    paths = override or cfg.dataset
    if not paths:
        raise CliError("no dataset given (config 'dataset' or --dataset)")
    ds = load_jester(paths)
    if cfg.subsample_users:
        ds = subsample_users(ds, cfg.subsample_users, cfg.subsample_seed)
    return ds, {str(p): file_sha256(p) for p in paths}


def _load_ratings(path) -> RatingDataset:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("user,item"):
        users, items, ratings = load_cells(path)
        if ratings is None:
            raise CliError(f"{path}: ratings column missing")
        n_users = int(users.max()) + 1 if users.size else 0
        n_items = int(items.max()) + 1 if items.size else 0
        return RatingDataset(n_users, n_items, users, items, ratings)
    return load_jester(path)


def _manifest(out_dir: Path, args, cfg: RunConfig, **extra):
    write_json(out_dir / "manifest.json", {
        "command": args.command, "argv": sys.argv[1:], "version": __version__,
        "config": cfg.to_dict(), **extra})


def _dump_groups(cfg, args, out_dir=None):
    text = groups.dumps(parse_structure(cfg.structure))
    if out_dir is None:
        sys.stdout.write(text)
    else:
        (Path(out_dir) / "groups.txt").write_text(text, encoding="utf-8")


def cmd_train(args, cfg: RunConfig):
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds, hashes = _load_dataset(cfg, args.dataset)
    train_ds, val_ds, test_ds = split(ds, cfg.split)
    gs = parse_structure(cfg.structure)
    t0 = time.perf_counter()
    stream = user_stream(train_ds.by_user(), cfg.learner.epochs, cfg.learner.seed)
    dictionary, stats = train(stream, gs, cfg.learner, obs_dim=ds.n_items)
    D = dictionary.matrix

    corr = cfg.correction
    if len(val_ds) >= 2:
        coded = code_users(D, train_ds, gs, cfg.coder)
        (score, scheme, beta, g0, g1), _ = select_correction(
            coded, train_ds.item_means(), HeldOutCells(val_ds), D, [corr.scheme], [corr.beta],
            corr.sim_clamp)
        corr = replace(corr, gamma0=g0, gamma1=g1)
        logger.info("validation RMSE %.6f MAE %.6f", *score)

    meta = {"structure": cfg.structure, "coder": asdict(cfg.coder),
            "learner": {k: v for k, v in asdict(cfg.learner).items() if k != "coder"},
            "correction": {**asdict(corr), "rating_range": list(corr.rating_range)},
            "steps": stats.t, "samples": stats.n_samples, "dataset_sha256": hashes,
            "version": __version__}
    save_dictionary(out / "dictionary.osdl", D, meta)
    for name, part in (("train", train_ds), ("validation", val_ds), ("test", test_ds)):
        save_cells(out / f"{name}.csv", part.users, part.items, part.ratings)
    if args.dump_groups:
        _dump_groups(cfg, args, out)
    _manifest(out, args, cfg, dataset_sha256=hashes, wall_time=time.perf_counter() - t0)
    print(f"wrote {out / 'dictionary.osdl'} ({stats.t} steps, {stats.n_samples} samples)")


def cmd_predict(args, cfg: RunConfig):
    D, meta = load_dictionary(args.dictionary)
    meta = meta or {}
    structure = meta.get("structure", cfg.structure)
    gs = parse_structure(structure)
    coder = cfg.coder
    if "coder" in meta:
        coder = CoderConfig(**meta["coder"])
    corr = cfg.correction
    if "correction" in meta:
        c = dict(meta["correction"])
        c["rating_range"] = tuple(c["rating_range"])
        corr = CorrectionConfig(**c)
    known = _load_ratings(args.ratings)
    if known.n_items > D.shape[0]:
        raise CliError(f"ratings mention item {known.n_items - 1}, dictionary has {D.shape[0]} rows")
    per_user = known.by_user()
    if args.cells:
        cu, ci, _ = load_cells(args.cells)
    else:
        cu = ci = None
    S = similarity_matrix(D, corr.scheme, corr.beta, corr.sim_clamp)
    means = known.item_means()
    means = np.concatenate([means, np.zeros(D.shape[0] - means.size)])
    rows = []
    users = range(len(per_user)) if cu is None else np.unique(cu)
    for u in users:
        obs, x_obs = per_user[u] if u < len(per_user) else (np.zeros(0, int), np.zeros(0))
        items = None if cu is None else ci[cu == u]
        try:
            pred = predict_user(int(u), D, obs, x_obs, gs, coder, corr, items=items, S=S)
            rows += zip([int(u)] * pred.items.size, pred.items, pred.base, pred.corrected)
        except UnratableUser:
            # no training ratings: fall back to item means
            items = items if items is not None else np.arange(D.shape[0])
            m = means[items]
            rows += zip([int(u)] * len(items), items, m, m)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "item", "estimate", "corrected_estimate"])
        for u, i, b, c in rows:
            w.writerow([u, int(i), f"{b:.6f}", f"{c:.6f}"])
    _manifest(Path(args.out).parent, args, cfg, dictionary=str(args.dictionary),
              dictionary_sha256=file_sha256(args.dictionary),
              ratings_sha256=file_sha256(args.ratings))
    print(f"wrote {len(rows)} predictions to {args.out}")


def cmd_evaluate(args, cfg):
    truth_u, truth_i, truth_r = load_cells(args.truth)
    if truth_r is None:
        raise CliError(f"{args.truth}: ratings column missing")
    est = {}
    with open(args.predictions, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            est[(int(row["user"]), int(row["item"]))] = float(row[args.column])
    missing = [(u, i) for u, i in zip(truth_u.tolist(), truth_i.tolist()) if (u, i) not in est]
    if missing:
        raise CliError(f"{len(missing)} truth cells have no prediction, e.g. {missing[0]}")
    pred = np.array([est[(u, i)] for u, i in zip(truth_u.tolist(), truth_i.tolist())])
    print(f"RMSE {rmse(truth_r, pred):.6f}")
    print(f"MAE {mae(truth_r, pred):.6f}")


def cmd_grid(args, cfg: RunConfig):
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid or GridSpec(structures=[cfg.structure])
    ds, hashes = _load_dataset(cfg, args.dataset)
    parts = split(ds, cfg.split)
    results = grid_search(ds, grid, cfg.split, budget=args.budget, workers=args.workers,
                          splits=parts)
    write_trials_csv(out / "trials.csv", results)
    base_rmse, base_mae = item_mean_baseline(parts[0], parts[2])
    ok = [r for r in results if r.ok]
    if ok:
        write_curve_csv(out / "best_curve.csv", ok[0])
    if args.dump_groups:
        _dump_groups(cfg, args, out)
    _manifest(out, args, cfg, grid=asdict(grid), dataset_sha256=hashes,
              item_mean_test_rmse=base_rmse, item_mean_test_mae=base_mae,
              n_trials=len(results), n_failed=len(results) - len(ok))
    print(f"wrote {len(results)} trials to {out / 'trials.csv'}")
    if ok:
        best = ok[0]
        print(f"best: {best.config.structure} kappa={best.config.kappa} rho={best.config.rho} "
              f"R={best.config.minibatch_size} {best.scheme} beta={best.beta} "
              f"test RMSE {best.test_rmse:.6f} MAE {best.test_mae:.6f} "
              f"(item mean {base_rmse:.6f})")


def cmd_report(args, cfg):
    results = read_trials_csv(args.trials)
    rows = surfaces(results)
    write_surfaces_csv(args.out, rows)
    print(f"wrote {len(rows)} surface rows to {args.out}")


def cmd_gen(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    gs = parse_structure(args.structure)
    sd = gen_synthetic(args.users, args.items, gs, sparsity=args.sparsity, noise=args.noise,
                       missing=args.missing, seed=seed)
    save_jester(sd.dataset, out / "ratings.csv")
    u, i, r = sd.hidden_cells()
    save_cells(out / "hidden.csv", u, i, r)
    save_dictionary(out / "true_dictionary.osdl", sd.dictionary,
                    {"structure": args.structure, "seed": seed})
    write_json(out / "manifest.json", {"command": "gen", "argv": sys.argv[1:], "seed": seed,
                                       "version": __version__, "params": vars(args) | {"seed": seed}})
    print(f"wrote {len(sd.dataset)} observed and {u.size} hidden ratings to {out}")


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
            "grid": cmd_grid, "report": cmd_report, "gen": cmd_gen}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command is None:
            if args.dump_groups:
                _dump_groups(cfg, args)
                return 0
            parser.print_usage(sys.stderr)
            return 2
        COMMANDS[args.command](args, cfg)
    except (OSError, ValueError, CliError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"osdl: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
