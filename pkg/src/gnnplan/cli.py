"""Command-line surface for the whole pipeline.

Subcommands: parse, expand, augment, train, exec, eval, gradcheck. Every
command reads one JSON run-configuration file (see README for the schema)
plus overriding flags, writes a config snapshot into the output directory,
and exits with: 0 success, 1 config/validation error, 2 usage error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from . import __version__, pddl
from .derived import Augmenter, AugmentationSpec, PRESETS
from .gnn import (
    CheckpointError,
    GnnHyper,
    gradient_check,
    load_checkpoint,
    make_value_fn,
    save_checkpoint,
)
from .grounding import StateModel
from .policy import execute, write_trace
from .report import build_report, render_csv, render_text
from .state_space import (
    CapExceededError,
    Dataset,
    TransitionSystem,
    compute_vstar,
    expand,
    instance_fingerprint,
    optimal_plan_length,
    sample_dataset,
    save_dataset,
)
from .training import Checkpoint, LossConfig, TrainConfig, TrainingError, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    path: str
    raw: dict
    domain_path: str
    instances: dict[str, list[str]]
    augmentation: AugmentationSpec | None
    hyper: GnnHyper
    loss: LossConfig
    training: dict
    expansion: dict
    evaluation: dict
    checkpoint: str | None


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    errors: list[str] = []

    domain_path = raw.get("domain")
    if not isinstance(domain_path, str):
        errors.append("config key 'domain' must be a PDDL file path")
    elif not os.path.exists(_resolve(path, domain_path)):
        errors.append(f"domain file not found: {domain_path}")

    instances: dict[str, list[str]] = {}
    for partition, files in (raw.get("instances") or {}).items():
        if partition not in ("train", "validation", "test"):
            errors.append(f"unknown instance partition {partition!r}")
            continue
        if not isinstance(files, list) or not all(isinstance(x, str) for x in files):
            errors.append(f"instances.{partition} must be a list of file paths")
            continue
        missing = [x for x in files if not os.path.exists(_resolve(path, x))]
        errors.extend(f"instance file not found: {x}" for x in missing)
        instances[partition] = [_resolve(path, x) for x in files]

    augmentation: AugmentationSpec | None = None
    aug = raw.get("augmentation")
    if isinstance(aug, str):
        if aug not in PRESETS:
            errors.append(f"unknown augmentation preset {aug!r} (have: {', '.join(sorted(PRESETS))})")
        else:
            augmentation = PRESETS[aug]
    elif isinstance(aug, dict):
        try:
            augmentation = AugmentationSpec.from_dict(aug)
        except (KeyError, TypeError) as exc:
            errors.append(f"bad augmentation spec: {exc}")
    elif aug is not None:
        errors.append("augmentation must be a preset name, an object, or null")

    hyper = GnnHyper()
    try:
        hyper = GnnHyper(**{**hyper.to_dict(), **(raw.get("hyper") or {})})
    except (TypeError, ValueError) as exc:
        errors.append(f"bad hyper section: {exc}")

    loss = LossConfig()
    try:
        loss_raw = raw.get("loss") or {}
        loss = LossConfig(
            kind=loss_raw.get("kind", loss.kind),
            delta=loss_raw.get("delta", loss.delta),
            regularizers=loss_raw.get("regularizers", loss.regularizers),
        )
    except ValueError as exc:
        errors.append(f"bad loss section: {exc}")

    training = {
        "learning_rate": 0.0002,
        "batch_size": 16,
        "max_epochs": 100,
        "time_budget": None,
        "seeds": [0, 1, 2, 3, 4],
        "patience": None,
        "target_validation_loss": None,
        "eval_seed": 0,
    }
    training.update(raw.get("training") or {})
    expansion = {"state_cap": 40000, "sample_cap": 40000, "sample_seed": 0}
    expansion.update(raw.get("expansion") or {})
    evaluation = {
        "mode": "both",
        "step_limit": 1000,
        "eval_seed": 0,
        "oracle_node_budget": 1000000,
        "oracle_time_budget": 60.0,
        "include_states": False,
    }
    evaluation.update(raw.get("evaluation") or {})

    checkpoint = raw.get("checkpoint")
    if checkpoint is not None:
        if not isinstance(checkpoint, str):
            errors.append("config key 'checkpoint' must be a path")
        else:
            checkpoint = _resolve(path, checkpoint)

    if errors:
        raise ConfigError("\n".join(f"{path}: {e}" for e in errors))
    return RunConfig(
        path=path,
        raw=raw,
        domain_path=_resolve(path, domain_path),
        instances=instances,
        augmentation=augmentation,
        hyper=hyper,
        loss=loss,
        training=training,
        expansion=expansion,
        evaluation=evaluation,
        checkpoint=checkpoint,
    )


def _resolve(config_path: str, rel: str) -> str:
    if os.path.isabs(rel):
        return rel
    return os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(config_path)), rel))


def _load_domain(cfg: RunConfig) -> pddl.Domain:
    with open(cfg.domain_path) as f:
        return pddl.parse_domain(f.read(), cfg.domain_path)


def _load_instances(cfg: RunConfig, domain: pddl.Domain, partition: str) -> list[pddl.Instance]:
    paths = cfg.instances.get(partition)
    if not paths:
        raise ConfigError(f"{cfg.path}: config lists no {partition!r} instances")
    out = []
    for p in paths:
        with open(p) as f:
            out.append(pddl.parse_instance(f.read(), domain, p))
    return out


def _check_disjoint(cfg: RunConfig, domain: pddl.Domain) -> None:
    """No instance may appear in more than one partition."""
    seen: dict[str, tuple[str, str]] = {}
    for partition in ("train", "validation", "test"):
        for p in cfg.instances.get(partition, []):
            with open(p) as f:
                inst = pddl.parse_instance(f.read(), domain, p)
            fp = instance_fingerprint(inst)
            if fp in seen:
                other_partition, other_path = seen[fp]
                if other_partition != partition or other_path != p:
                    raise ConfigError(
                        f"instance {p} ({partition}) duplicates {other_path} ({other_partition})"
                    )
            seen[fp] = (partition, p)


def _write_snapshot(args: argparse.Namespace, cfg: RunConfig | None) -> None:
    os.makedirs(args.out, exist_ok=True)
    snapshot = {
        "format": "gnnplan-config-snapshot 1",
        "version": __version__,
        "command": args.command,
        "config_path": getattr(cfg, "path", None),
        "config": getattr(cfg, "raw", None),
        "overrides": {
            "seed": getattr(args, "seed", None),
            "mode": getattr(args, "mode", None),
            "loss": getattr(args, "loss", None),
            "jobs": getattr(args, "jobs", None),
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(os.path.join(args.out, "config-snapshot.json"), "w") as f:
        json.dump(snapshot, f, indent=2, sort_keys=True)
        f.write("\n")


def _augmenter(cfg: RunConfig, domain: pddl.Domain) -> Augmenter | None:
    if cfg.augmentation is None:
        return None
    return Augmenter(domain, cfg.augmentation)


def _parallel(jobs: int, fn, items):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_parse(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    _write_snapshot(args, cfg)
    domain = _load_domain(cfg)
    summary = {
        "domain": domain.name,
        "predicates": {p.name: p.arity for p in domain.predicates},
        "schemas": [s.name for s in domain.schemas],
        "instances": [],
    }
    for partition in ("train", "validation", "test"):
        for inst in _load_instances(cfg, domain, partition) if cfg.instances.get(partition) else []:
            diags = pddl.validate(domain, inst)
            for d in diags:
                print(str(d), file=sys.stderr)
            if diags:
                return EXIT_CONFIG
            summary["instances"].append(
                {
                    "name": inst.name,
                    "partition": partition,
                    "objects": len(inst.objects),
                    "init_atoms": len(inst.init),
                    "goal_atoms": len(inst.goal),
                }
            )
    if args.format == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"domain {summary['domain']}: "
              f"{len(summary['predicates'])} predicates, {len(summary['schemas'])} schemas")
        for inst in summary["instances"]:
            print(
                f"instance {inst['name']} [{inst['partition']}]: {inst['objects']} objects, "
                f"{inst['init_atoms']} init atoms, {inst['goal_atoms']} goal atoms"
            )
    return EXIT_OK


def cmd_expand(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    _write_snapshot(args, cfg)
    domain = _load_domain(cfg)
    _check_disjoint(cfg, domain)
    cap = int(cfg.expansion["state_cap"])
    sample_cap = int(cfg.expansion["sample_cap"])
    sample_seed = int(cfg.expansion["sample_seed"] if args.seed is None else args.seed)
    lines = []
    for partition in ("train", "validation"):
        if not cfg.instances.get(partition):
            continue
        instances = _load_instances(cfg, domain, partition)
        systems: list[TransitionSystem] = _parallel(
            args.jobs, lambda inst: compute_vstar(expand(inst, cap)), instances
        )
        dataset = sample_dataset(systems, cap=sample_cap, seed=sample_seed, partition=partition)
        out_path = os.path.join(args.out, f"{partition}.dataset")
        save_dataset(dataset, out_path)
        for ts in systems:
            v0 = ts.vstar[ts.init_index] if ts.vstar else None
            lines.append(
                f"{partition} {ts.instance_id}: {len(ts.states)} reachable states, "
                f"V*(init) = {'unsolvable' if v0 is None else v0}"
            )
        lines.append(f"{partition}: wrote {len(dataset.entries)} entries to {out_path}")
    if not lines:
        raise ConfigError(f"{cfg.path}: no train or validation instances to expand")
    print("\n".join(lines))
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    _write_snapshot(args, cfg)
    domain = _load_domain(cfg)
    augmenter = _augmenter(cfg, domain)
    if augmenter is None:
        raise ConfigError(f"{cfg.path}: no augmentation configured")
    aug_domain = augmenter.domain
    if args.format == "json":
        print(
            json.dumps(
                {
                    "domain": aug_domain.name,
                    "predicates": [
                        {"name": p.name, "arity": p.arity, "origin": p.origin}
                        for p in aug_domain.predicates
                    ],
                },
                indent=2,
            )
        )
    else:
        for p in aug_domain.predicates:
            print(f"{p.name}/{p.arity} [{p.origin}]")
    for partition in ("train", "validation", "test"):
        if cfg.instances.get(partition):
            inst = _load_instances(cfg, domain, partition)[0]
            model = StateModel(inst)
            augmented = augmenter.augment(model.init)
            print(
                f"sample: init of {inst.name} grows from "
                f"{len(model.init.atoms)} to {len(augmented.atoms)} atoms"
            )
            break
    return EXIT_OK


def _build_datasets(cfg: RunConfig, domain: pddl.Domain, jobs: int) -> tuple[Dataset, Dataset]:
    cap = int(cfg.expansion["state_cap"])
    sample_cap = int(cfg.expansion["sample_cap"])
    sample_seed = int(cfg.expansion["sample_seed"])
    out = []
    for partition in ("train", "validation"):
        instances = _load_instances(cfg, domain, partition)
        systems = _parallel(jobs, lambda inst: compute_vstar(expand(inst, cap)), instances)
        out.append(sample_dataset(systems, cap=sample_cap, seed=sample_seed, partition=partition))
    return out[0], out[1]


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    _write_snapshot(args, cfg)
    domain = _load_domain(cfg)
    _check_disjoint(cfg, domain)
    train_ds, valid_ds = _build_datasets(cfg, domain, args.jobs)
    t = cfg.training
    loss = cfg.loss if args.loss is None else replace(cfg.loss, kind=args.loss)
    seeds = tuple(t["seeds"]) if args.seed is None else (args.seed,)
    config = TrainConfig(
        hyper=cfg.hyper,
        loss=loss,
        learning_rate=float(t["learning_rate"]),
        batch_size=int(t["batch_size"]),
        max_epochs=int(t["max_epochs"]),
        time_budget=t["time_budget"],
        seeds=seeds,
        augmentation=cfg.augmentation,
        eval_seed=int(t["eval_seed"]),
        patience=t["patience"],
        target_validation_loss=t["target_validation_loss"],
    )
    log_path = os.path.join(args.out, "loss-log.txt")
    with open(log_path, "w") as log_file:
        log_file.write("gnnplan-loss-log 1\n")

        def on_epoch(seed: int, epoch: int, train_loss: float, val_loss: float) -> None:
            log_file.write(f"seed {seed} epoch {epoch} train {train_loss:.6f} validation {val_loss:.6f}\n")
            log_file.flush()

        checkpoint = train(train_ds, valid_ds, config, epoch_callback=on_epoch)
    ckpt_path = os.path.join(args.out, "checkpoint.npz")
    save_checkpoint(
        ckpt_path,
        checkpoint.params,
        extra={
            "seed": checkpoint.seed,
            "epoch": checkpoint.epoch,
            "train_loss": checkpoint.train_loss,
            "validation_loss": checkpoint.validation_loss,
            "loss": {"kind": loss.kind, "delta": loss.delta, "regularizers": loss.regularizers},
            "augmentation": cfg.augmentation.to_dict() if cfg.augmentation else None,
            "provenance": checkpoint.provenance,
        },
    )
    report_path = os.path.join(args.out, "training-report.txt")
    with open(report_path, "w") as f:
        f.write("gnnplan-training-report 1\n")
        f.write(f"best seed {checkpoint.seed}\n")
        f.write(f"best epoch {checkpoint.epoch}\n")
        f.write(f"train loss {checkpoint.train_loss:.6f}\n")
        f.write(f"validation loss {checkpoint.validation_loss:.6f}\n")
        f.write(f"checkpoint {ckpt_path}\n")
    print(
        f"best seed {checkpoint.seed} epoch {checkpoint.epoch} "
        f"validation {checkpoint.validation_loss:.6f}; checkpoint at {ckpt_path}"
    )
    return EXIT_OK


def _load_eval_value_fn(cfg: RunConfig, args: argparse.Namespace, domain: pddl.Domain):
    ckpt_path = cfg.checkpoint or os.path.join(args.out, "checkpoint.npz")
    if not os.path.exists(ckpt_path):
        raise ConfigError(f"checkpoint not found: {ckpt_path} (set the 'checkpoint' config key)")
    augmenter = _augmenter(cfg, domain)
    expected = augmenter.signature() if augmenter else domain.signature()
    params, extra = load_checkpoint(ckpt_path, expected_signature=expected)
    eval_seed = int(cfg.evaluation["eval_seed"] if args.seed is None else args.seed)
    value_fn = make_value_fn(
        params, augment=augmenter.augment if augmenter else None, eval_seed=eval_seed
    )
    return value_fn, eval_seed, extra


def _modes(args: argparse.Namespace, cfg: RunConfig) -> list[str]:
    mode = args.mode or cfg.evaluation["mode"]
    if mode == "both":
        return ["cycle-avoid", "plain"]
    return [mode]


def _run_traces(cfg, args, domain) -> list:
    value_fn, eval_seed, _ = _load_eval_value_fn(cfg, args, domain)
    instances = _load_instances(cfg, domain, "test")
    modes = _modes(args, cfg)
    step_limit = int(cfg.evaluation["step_limit"])

    def run(job):
        inst, mode = job
        return execute(value_fn, inst, mode=mode, step_limit=step_limit, eval_seed=eval_seed)

    jobs = [(inst, mode) for mode in modes for inst in instances]
    traces = _parallel(args.jobs, run, jobs)
    trace_dir = os.path.join(args.out, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    include_states = bool(cfg.evaluation["include_states"])
    for t in traces:
        write_trace(
            t,
            os.path.join(trace_dir, f"{t.instance_id}.{t.mode}.trace"),
            include_states=include_states,
        )
    return traces


def cmd_exec(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    _write_snapshot(args, cfg)
    domain = _load_domain(cfg)
    traces = _run_traces(cfg, args, domain)
    for t in traces:
        print(f"{t.mode} {t.instance_id}: {t.outcome} in {t.plan_length} steps")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    _write_snapshot(args, cfg)
    domain = _load_domain(cfg)
    _check_disjoint(cfg, domain)
    traces = _run_traces(cfg, args, domain)
    instances = _load_instances(cfg, domain, "test")
    node_budget = cfg.evaluation["oracle_node_budget"]
    time_budget = cfg.evaluation["oracle_time_budget"]

    def oracle(inst: pddl.Instance):
        return inst.name, optimal_plan_length(inst, node_budget, time_budget)

    oracle_lengths = dict(_parallel(args.jobs, oracle, instances))
    report = build_report(traces, oracle_lengths)
    text = render_text(report)
    with open(os.path.join(args.out, "report.txt"), "w") as f:
        f.write(text)
    with open(os.path.join(args.out, "report.csv"), "w") as f:
        f.write(render_csv(report))
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seed = 0 if args.seed is None else args.seed
    result = gradient_check(seed=seed)
    threshold = 1e-4
    status = "PASS" if result["max_rel_err"] < threshold else "FAIL"
    print(
        f"max relative error {result['max_rel_err']:.3e} over {result['checked']} coordinates "
        f"({result['skipped']} skipped at ReLU kinks): {status} (threshold {threshold:.0e})"
    )
    if args.out != ".":
        _write_snapshot(args, None)
    return EXIT_OK if status == "PASS" else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnnplan",
        description="Learn and evaluate generalized value functions for lifted-STRIPS domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "parse": (cmd_parse, "Parse and validate the domain and instance files"),
        "expand": (cmd_expand, "Expand reachable state spaces and write datasets"),
        "augment": (cmd_augment, "Show the augmented predicate signature"),
        "train": (cmd_train, "Train value networks and keep the best checkpoint"),
        "exec": (cmd_exec, "Execute the greedy policy on the test instances"),
        "eval": (cmd_eval, "Execute, compare against optimal lengths, and report"),
        "gradcheck": (cmd_gradcheck, "Finite-difference check of the gradients"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "gradcheck", help="run configuration file (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the command's seed")
        p.add_argument(
            "--mode",
            choices=["plain", "cycle-avoid", "both"],
            default=None,
            help="policy execution mode",
        )
        p.add_argument(
            "--loss", choices=["l0", "l1", "supervised"], default=None, help="override loss kind"
        )
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for instance-level work")
        p.add_argument("--format", choices=["text", "json"], default="text", help="output format")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pddl.ParseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (CapExceededError, CheckpointError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
