"""Command-line entry point.

Commands:
  train      train a proposal/critic pair on a target, write checkpoints
  sample     run chains with a trained proposal, write traces + metrics
  benchmark  consolidate (target, kernel) metric rows into one CSV
  diagnose   recompute diagnostics from trace CSVs on disk

Configuration precedence: CLI flag > config file (key=value or JSON) > default.
Exit codes: 0 success, 2 config error, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import load_checkpoint, save_checkpoint
from .critic import make_critic
from .diag import ReferenceMoments, ess, rhat, mean_match, predictive_log_posterior, split_dataset
from .hmc import HmcConfig, make_hmc_step, tune_step_size
from .kernel import mh_step_true, run_chain, run_parallel_chains, write_trace, read_trace
from .revnet import Proposal
from .targets import (EXPECTED_SHAPES, LogisticPosterior, load_dataset,
                      make_target, standardized)
from .train import TrainConfig, TrainDivergence, bootstrap_train

LOGISTIC_TARGETS = tuple(EXPECTED_SHAPES)


@dataclass
class ExperimentConfig:
    target: str = "mog2"
    kernel: str = "ai"  # ai | hmc
    seed: int = 0
    out: str = "out"
    dataset_path: str = ""
    delimiter: str = ""
    # architecture
    proposal_hidden: int = 0  # 0 = pick by target kind (32 for 2D, 64 Bayesian)
    proposal_layers: int = 0  # 0 = default (5)
    proposal_init_scale: float = 0.0  # 0 = pick by target (see resolved())
    critic_kind: str = "product"
    critic_hidden: int = 0  # 0 = pick by target kind (32 for 2D, 128 Bayesian)
    # training
    rounds: int = 0  # 0 = pick by target (multimodal 2D targets need more)
    pool_size: int = 1024
    batch_size: int = 256
    lr: float = 1e-3
    disc_steps: int = 3
    kernel_steps: int = 1
    mh_steps_per_round: int = 10
    p0_scale: float = 0.0  # 0 = pick by target kind (5.0 for 2D, 1.0 Bayesian)
    reinject_frac: float = -1.0  # -1 = default (0.125)
    rwmh_scale: float = 0.0  # 0 = default (0.5)
    jump_bonus: float = 0.0  # extra squared-jump weight in the proposal loss
    # sampling
    burn_in: int = 1000
    keep: int = 0  # 0 = pick by target kind (1000 for 2D, 5000 Bayesian)
    chains: int = 1
    threads: int = 1
    # hmc
    leapfrog_steps: int = 40
    step_size: float = 0.0  # 0 = tune by grid search
    # reference moments for ESS (file written by `sample`; empty = auto)
    ref: str = ""

    def resolved(self):
        """Fill the target-kind-dependent defaults."""
        bayes = self.target in LOGISTIC_TARGETS
        cfg = ExperimentConfig(**asdict(self))
        if cfg.proposal_hidden == 0:
            cfg.proposal_hidden = 64 if bayes else 32
        if cfg.proposal_layers == 0:
            cfg.proposal_layers = 5
        if cfg.proposal_init_scale == 0.0:
            if bayes:
                # posteriors are sampled in whitened coordinates where they
                # are near-standard-normal; a near-zero init composes the
                # layer quarter-turns into a coordinate/auxiliary swap, i.e.
                # an independence proposal, which is the right starting point
                cfg.proposal_init_scale = 0.02
            else:
                cfg.proposal_init_scale = 0.5 if self.target == "mog2" else 1.0
        if cfg.critic_hidden == 0:
            cfg.critic_hidden = 128 if bayes else 32
        if cfg.keep == 0:
            cfg.keep = 5000 if bayes else 1000
        if cfg.p0_scale == 0.0:
            cfg.p0_scale = 1.0 if bayes else 5.0
        if cfg.reinject_frac < 0.0:
            cfg.reinject_frac = 0.125
        if cfg.rwmh_scale == 0.0:
            cfg.rwmh_scale = 0.5
        if cfg.rounds == 0:
            # more modes need longer adversarial training to cover them all
            per_target = {"mog6": 3500, "mog3_unbalanced": 1300}
            cfg.rounds = 500 if bayes else per_target.get(cfg.target, 1500)
        return cfg


class ConfigError(ValueError):
    pass


def _parse_config_file(path):
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def build_config(args):
    """Merge defaults, config file and CLI flags (in increasing precedence)."""
    cfg = ExperimentConfig()
    file_values = _parse_config_file(args.config) if args.config else {}
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    for k, v in file_values.items():
        if k not in by_name:
            raise ConfigError(f"unknown config key '{k}'")
        typ = by_name[k].type
        try:
            if typ == "int":
                v = int(v)
            elif typ == "float":
                v = float(v)
        except ValueError as e:
            raise ConfigError(f"config key '{k}': {e}") from e
        setattr(cfg, k, v)
    for k in by_name:
        cli_val = getattr(args, k, None)
        if cli_val is not None:
            setattr(cfg, k, cli_val)
    if cfg.target in LOGISTIC_TARGETS and not cfg.dataset_path:
        raise ConfigError(f"target '{cfg.target}' requires dataset_path")
    if cfg.kernel not in ("ai", "hmc"):
        raise ConfigError(f"kernel must be 'ai' or 'hmc', got '{cfg.kernel}'")
    return cfg.resolved()


def _config_hash(cfg):
    return hashlib.sha256(
        json.dumps(asdict(cfg), sort_keys=True).encode()
    ).hexdigest()[:16]


def _load_target(cfg):
    if cfg.target in LOGISTIC_TARGETS:
        path = Path(cfg.dataset_path)
        if not path.exists():
            raise ConfigError(f"dataset file not found: {path}")
        ds = load_dataset(path, cfg.target, delimiter=cfg.delimiter or None)
        n, d = EXPECTED_SHAPES[cfg.target]
        if ds.X.shape != (n, d):
            raise ConfigError(
                f"dataset '{cfg.target}': expected {n}x{d} after preprocessing, "
                f"got {ds.X.shape[0]}x{ds.X.shape[1]}")
        # posterior conditions on the train split only; the held-out split
        # is scored by cmd_sample via the predictive log-posterior
        train, _ = split_dataset(ds)
        return LogisticPosterior(train).as_target()
    return make_target(cfg.target)


def _write_run_meta(cfg, out):
    meta = {"version": __version__, "seed": cfg.seed,
            "config_hash": _config_hash(cfg), "config": asdict(cfg)}
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _pilot_whitening(target, seed):
    """Per-coordinate posterior moments from a short pilot chain."""
    hcfg = tune_step_size(target, np.zeros(target.dim), seed=seed)
    pilot = run_chain(make_hmc_step(target, hcfg), np.zeros(target.dim),
                      target, 500, 2000, seed + 900, "hmc")
    return pilot.states.mean(axis=0), pilot.states.std(axis=0)


def _load_whitening(out):
    std_file = Path(out) / "standardize.csv"
    if not std_file.exists():
        raise ConfigError(
            f"whitening file not found: {std_file} (run `train` first)")
    data = np.loadtxt(std_file, delimiter=",", ndmin=2)
    return data[0], data[1]


def cmd_train(cfg):
    target = _load_target(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.target in LOGISTIC_TARGETS:
        # posteriors are trained and sampled in whitened coordinates; the
        # affine map is estimated once here and persisted for `sample`
        mean, scale = _pilot_whitening(target, cfg.seed)
        np.savetxt(out / "standardize.csv", np.vstack([mean, scale]),
                   delimiter=",")
        target = standardized(target, mean, scale)
    proposal = Proposal(target.dim, hidden=cfg.proposal_hidden,
                        n_layers=cfg.proposal_layers, seed=cfg.seed,
                        init_scale=cfg.proposal_init_scale)
    critic = make_critic(cfg.critic_kind, 2 * target.dim,
                         hidden=cfg.critic_hidden, seed=cfg.seed + 1)
    tcfg = TrainConfig(disc_steps=cfg.disc_steps, kernel_steps=cfg.kernel_steps,
                       batch_size=cfg.batch_size, lr=cfg.lr,
                       pool_size=cfg.pool_size, bootstrap_rounds=cfg.rounds,
                       mh_steps_per_round=cfg.mh_steps_per_round,
                       p0_scale=cfg.p0_scale, reinject_frac=cfg.reinject_frac,
                       rwmh_scale=cfg.rwmh_scale, jump_bonus=cfg.jump_bonus)
    _, _, pool, history = bootstrap_train(target, proposal, critic, tcfg,
                                          seed=cfg.seed)
    save_checkpoint(proposal.params, out / "proposal.ckpt")
    save_checkpoint(critic.params, out / "critic.ckpt")
    np.savetxt(out / "pool.csv", pool.positions, delimiter=",")
    history.write_csv(out / "history.csv")
    _write_run_meta(cfg, out)
    return 0


def _load_proposal(cfg, target, checkpoint):
    proposal = Proposal(target.dim, hidden=cfg.proposal_hidden,
                        n_layers=cfg.proposal_layers, seed=cfg.seed,
                        init_scale=cfg.proposal_init_scale)
    if not Path(checkpoint).exists():
        raise ConfigError(f"checkpoint file not found: {checkpoint}")
    values = load_checkpoint(checkpoint)
    try:
        proposal.params.load_values(values)
    except (KeyError, ValueError) as e:
        raise ConfigError(
            f"checkpoint {checkpoint} does not match target dim {target.dim}: {e}")
    return proposal


def _reference_moments(cfg, target):
    if cfg.ref:
        data = np.loadtxt(cfg.ref, ndmin=2)
        return ReferenceMoments(data[0], data[1], source=cfg.ref)
    if target.mean is not None:
        return ReferenceMoments(target.mean, target.var, source="analytic")
    return None


def _sample_traces(cfg, target, step, kernel_name):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x73616D70]))
    pool_file = Path(cfg.out) / "pool.csv"
    if kernel_name == "ai" and pool_file.exists():
        # start from the training pool: already distributed over the modes
        pool = np.loadtxt(pool_file, delimiter=",", ndmin=2)
        inits = pool[rng.choice(pool.shape[0], cfg.chains, replace=False)]
    else:
        inits = rng.standard_normal((cfg.chains, target.dim))
    seeds = [cfg.seed + 1000 * (k + 1) for k in range(cfg.chains)]
    return run_parallel_chains(step, inits, target, cfg.burn_in, cfg.keep,
                               seeds, kernel_name, threads=cfg.threads)


def _metrics_row(cfg, target, traces, extra=None):
    ref = _reference_moments(cfg, target)
    pooled = np.concatenate([t.states for t in traces], axis=0)
    if ref is None:
        # fall back to pooled-chain moments; recorded as such
        ref = ReferenceMoments(pooled.mean(axis=0), pooled.var(axis=0),
                               source="pooled-chains")
    reports = [ess(t.states, ref, wall_time=t.wall_time_keep) for t in traces]
    min_ess = float(np.mean([r.min_ess for r in reports]))
    ess_sec = float(np.mean([r.ess_per_second_per_chain for r in reports]))
    r_hat = rhat(np.stack([t.states for t in traces])) if len(traces) >= 2 else float("nan")
    row = {"target": cfg.target, "kernel": cfg.kernel,
           "min_ess": min_ess, "ess_per_sec_per_chain": ess_sec,
           "rhat": r_hat, "log_pred_post": "", "mean_match": "",
           "ref_source": ref.source}
    if extra:
        row.update(extra)
    return row


METRIC_COLUMNS = ["target", "kernel", "min_ess", "ess_per_sec_per_chain",
                  "rhat", "log_pred_post", "mean_match", "ref_source"]


def _write_metrics(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def cmd_sample(cfg, checkpoint=None):
    target = _load_target(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sample_target, whiten = target, None
    if cfg.kernel == "ai":
        if cfg.target in LOGISTIC_TARGETS:
            whiten = _load_whitening(cfg.out)
            sample_target = standardized(target, *whiten)
        ckpt = checkpoint or str(Path(cfg.out) / "proposal.ckpt")
        proposal = _load_proposal(cfg, sample_target, ckpt)
        step = lambda state, rng: mh_step_true(state, sample_target, proposal,
                                               rng, test="metropolis")
    else:
        if cfg.step_size > 0:
            hcfg = HmcConfig(cfg.step_size, cfg.leapfrog_steps)
        else:
            hcfg = tune_step_size(target, np.zeros(target.dim), seed=cfg.seed,
                                  leapfrog_steps=cfg.leapfrog_steps)
        step = make_hmc_step(target, hcfg)
    traces = _sample_traces(cfg, sample_target, step, cfg.kernel)
    if whiten is not None:
        # map whitened-space states back to the original coordinates
        for t in traces:
            t.states = whiten[0] + whiten[1] * t.states
            t.target = target.name
    for k, t in enumerate(traces):
        write_trace(t, out / f"trace_{cfg.target}_{cfg.kernel}_{k}.csv")
    extra = {}
    if cfg.target in LOGISTIC_TARGETS:
        ds = load_dataset(Path(cfg.dataset_path), cfg.target,
                          delimiter=cfg.delimiter or None)
        _, test = split_dataset(ds)
        pooled = np.concatenate([t.states for t in traces], axis=0)
        extra["log_pred_post"] = predictive_log_posterior(pooled, test.X, test.y)
        ref = _reference_moments(cfg, target)
        if ref is not None:
            extra["mean_match"] = mean_match(pooled, ref)
    row = _metrics_row(cfg, target, traces, extra)
    _write_metrics([row], out / "metrics.csv")
    _write_run_meta(cfg, out)
    return 0


def cmd_benchmark(cfg, targets, checkpoints):
    """One metrics row per (target, kernel); missing checkpoints skip the row."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, skipped = [], []
    for name in targets:
        for kernel in ("ai", "hmc"):
            sub = ExperimentConfig(**asdict(cfg))
            sub.target, sub.kernel = name, kernel
            sub.keep = cfg.keep
            sub.out = str(out / f"{name}_{kernel}")
            sub = sub.resolved()
            ckpt = checkpoints.get(name)
            if kernel == "ai" and (ckpt is None or not Path(ckpt).exists()):
                skipped.append((name, kernel, "missing checkpoint"))
                continue
            cmd_sample(sub, checkpoint=ckpt if kernel == "ai" else None)
            with open(Path(sub.out) / "metrics.csv", newline="") as f:
                rows.extend(list(csv.DictReader(f)))
    _write_metrics(rows, out / "benchmark.csv")
    if skipped:
        with open(out / "benchmark_skipped.txt", "w") as f:
            for name, kernel, reason in skipped:
                f.write(f"{name},{kernel},{reason}\n")
    return 0


def cmd_diagnose(cfg, trace_paths):
    target = _load_target(cfg)
    traces = [read_trace(p) for p in trace_paths]
    ref = _reference_moments(cfg, target)
    pooled = np.concatenate([t.states for t in traces], axis=0)
    if ref is None:
        ref = ReferenceMoments(pooled.mean(axis=0), pooled.var(axis=0),
                               source="pooled-chains")
    report = ess(pooled, ref)
    print(f"min_ess={report.min_ess:.1f} truncation_lag={report.truncation_lag}")
    if len(traces) >= 2:
        print(f"rhat={rhat(np.stack([t.states for t in traces])):.4f}")
    return 0


def _add_common(p):
    p.add_argument("--target", type=str, default=None)
    p.add_argument("--kernel", type=str, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--config", type=str, default=None)
    p.add_argument("--dataset-path", dest="dataset_path", type=str, default=None)
    p.add_argument("--delimiter", type=str, default=None)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    p.add_argument("--keep", type=int, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--pool-size", dest="pool_size", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--step-size", dest="step_size", type=float, default=None)
    p.add_argument("--critic-kind", dest="critic_kind", type=str, default=None)
    p.add_argument("--ref", type=str, default=None)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="invmh")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "sample", "benchmark", "diagnose"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "sample":
            p.add_argument("--checkpoint", type=str, default=None)
        if name == "benchmark":
            p.add_argument("--targets", type=str, default="mog2,mog6,ring,ring5")
            p.add_argument("--checkpoints", type=str, default="",
                           help="comma list of name=path pairs")
        if name == "diagnose":
            p.add_argument("traces", nargs="+")
    args = parser.parse_args(argv)

    try:
        cfg = build_config(args)
    except (ConfigError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    try:
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sample":
            return cmd_sample(cfg, checkpoint=args.checkpoint)
        if args.command == "benchmark":
            targets = [t for t in args.targets.split(",") if t]
            checkpoints = dict(kv.split("=", 1)
                               for kv in args.checkpoints.split(",") if kv)
            return cmd_benchmark(cfg, targets, checkpoints)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.traces)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except TrainDivergence as e:
        print(f"divergence: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
