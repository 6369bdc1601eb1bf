"""Command-line entry point: train, evaluate, sweep, replay, selftest."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cache_policy import CapacityViolation
from .config import DRL_SCHEMES, SCHEMES, load_config
from .drl import DivergenceError
from .experiment import (emit_csv, emit_sweep, evaluate, load_agent, results_to_csv, save_training,
                         sweep, train)
from .simulation import InvariantViolation, generate_trace, run_episode
from .workload import trace_from_csv, trace_to_csv

log = logging.getLogger("mmcache")


def _config(args):
    cfg = load_config(args.config, full=args.full_scale)
    if args.seed is not None:
        cfg = cfg.replace(seeds=[args.seed], train_seed=args.seed)
    if args.scheme:
        cfg = cfg.replace(schemes=[args.scheme])
    if args.episodes is not None:
        cfg = cfg.replace(episodes=args.episodes)
    return cfg


def _out(args, cfg) -> Path:
    return Path(args.out or cfg.output_dir)


def _scheme(args, cfg) -> str:
    return args.scheme or cfg.schemes[0]


def cmd_train(args) -> int:
    cfg = _config(args)
    scheme = _scheme(args, cfg)
    out = _out(args, cfg)

    def progress(row):
        log.info("episode %d eps=%.3f reward=%.1f unsat=%.4f", row.episode, row.epsilon,
                 row.episode_reward, row.unsatisfied_ratio)

    result = train(cfg, scheme, out_dir=out, progress=progress)
    print(f"{scheme}: {len(result.curve)} episodes, best unsatisfied ratio "
          f"{result.best_unsatisfied:.4f} at episode {result.best_episode}; wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    scheme = _scheme(args, cfg)
    out = _out(args, cfg)
    agent = None
    if scheme in DRL_SCHEMES:
        ckpt = Path(args.checkpoint) if args.checkpoint else out / f"{scheme}_best.qnet"
        if ckpt.exists():
            agent = load_agent(cfg, scheme, ckpt)
        else:
            log.info("no checkpoint at %s; training first", ckpt)
            tr = train(cfg, scheme, out_dir=out)
            agent = tr.frozen_agent()
    results = evaluate(cfg, scheme, agent, jobs=args.jobs)
    emit_csv(results, out / f"evaluate_{scheme}.csv")
    for r in results:
        s = r.snapshot
        print(f"{scheme} seed={r.seed} hit={s.hit_ratio:.4f} unsat={s.unsatisfied_ratio:.4f} "
              f"hops={s.avg_hops:.3f} load={s.reduced_load_ratio:.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    result = sweep(cfg, jobs=args.jobs, progress=lambda s: log.info("finished %s", s))
    paths = emit_sweep(result, out)
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def cmd_replay(args) -> int:
    cfg = _config(args)
    scheme = _scheme(args, cfg)
    trace_path = Path(args.trace)
    if args.record:
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        trace_path.write_text(trace_to_csv(generate_trace(cfg, cfg.seeds[0])))
    trace = trace_from_csv(trace_path.read_text())
    agent = None
    mode = "none"
    if scheme in DRL_SCHEMES:
        if not args.checkpoint:
            raise SystemExit(f"replaying {scheme} needs --checkpoint")
        agent, mode = load_agent(cfg, scheme, args.checkpoint), "frozen"
    seed = cfg.seeds[0]
    res = run_episode(cfg, scheme, seed, mode, agent, trace=trace)
    text = results_to_csv([res])
    if args.out:
        emit_csv([res], Path(args.out) / f"replay_{scheme}.csv")
    sys.stdout.write(text)
    return 0


def cmd_selftest(args) -> int:
    """Short end-to-end run of every scheme with the invariant audits on."""
    cfg = _config(args)
    small = cfg.replace(episodes=min(cfg.episodes, 2), seeds=cfg.seeds[:1])
    for scheme in SCHEMES:
        agent = None
        mode = "none"
        if scheme in DRL_SCHEMES:
            tr = train(small, scheme, episodes=small.episodes)
            agent, mode = tr.frozen_agent(), "frozen"
        res = run_episode(small, scheme, small.seeds[0], mode, agent)
        print(f"{scheme:12s} ok  hit={res.snapshot.hit_ratio:.3f} "
              f"unsat={res.snapshot.unsatisfied_ratio:.3f}")
    return 0


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
            "replay": cmd_replay, "selftest": cmd_selftest}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="single evaluation and training seed")
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("--out", help="output directory")
    common.add_argument("--full-scale", action="store_true",
                        help="500 contents, 6 nodes, 30 seeds")
    common.add_argument("--episodes", type=int, help="override the training episode cap")
    common.add_argument("--jobs", type=int, default=1, help="parallel evaluation processes")
    common.add_argument("--checkpoint", help="Q-network checkpoint to evaluate or replay")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mmcache", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a learning scheme")
    sub.add_parser("evaluate", parents=[common], help="frozen evaluation over seeds")
    sub.add_parser("sweep", parents=[common], help="schemes x cache sizes x seeds")
    rp = sub.add_parser("replay", parents=[common], help="run one scheme on a recorded trace")
    rp.add_argument("--trace", required=True, help="trace CSV (slot,node_id,content_id,arrival_order)")
    rp.add_argument("--record", action="store_true",
                    help="first write the trace sampled for --seed to the --trace path")
    sub.add_parser("selftest", parents=[common], help="quick end-to-end invariant check")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvariantViolation, CapacityViolation) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
