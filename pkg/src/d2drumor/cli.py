"""Command-line driver.

Settings come from three layers, later ones winning: built-in defaults,
a JSON config file given with ``--config``, then explicit flags.

Exit codes: 0 success, 1 oracle-check disagreement, 2 bad configuration
or scenario, 3 solver failure, 4 oracle enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from .errors import ConfigError, D2DRumorError, OracleCapError, SolverError

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_SOLVER, EXIT_ORACLE = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    command: str = ""
    scenario: Optional[str] = None
    out: str = "out"
    seed: int = 0
    k: List[int] = field(default_factory=lambda: [2, 4, 6, 8, 10])
    epsilon: float = 0.1
    delta: float = 0.1
    beta: float = 1.0
    budgets: Optional[List[int]] = None
    preset: str = "stadium"
    p1: Optional[float] = None
    p2: Optional[float] = None
    snap: Optional[str] = None
    snapshots: int = 1
    ua_levels: List[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 1.0])
    retention_budgets: List[int] = field(default_factory=lambda: list(range(11)))
    trials: int = 50
    weight_ceiling: float = 0.1
    methods: List[str] = field(default_factory=lambda: ["rcf", "degree", "random"])
    instances: int = 30

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(k < 1 for k in self.k):
            raise ConfigError("every k must be >= 1")
        if self.epsilon <= 0 or not 0 < self.delta < 1:
            raise ConfigError("need epsilon > 0 and 0 < delta < 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0 <= self.weight_ceiling <= 1:
            raise ConfigError("weight ceiling must lie in [0, 1]")
        if any(not 0 <= u <= 1 for u in self.ua_levels):
            raise ConfigError("UA levels must lie in [0, 1]")
        if any(l < 0 for l in self.retention_budgets):
            raise ConfigError("retention budgets must be >= 0")
        bad = set(self.methods) - {"rcf", "degree", "random"}
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")


def _ints(text: str) -> List[int]:
    if text.strip() == "":
        return []
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="d2drumor", description="Rumor-critical D2D devices: scenarios, pipeline and experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", help="scenario directory written by 'generate'")
    scen.add_argument("--trials", type=int)
    scen.add_argument("--epsilon", type=float)
    scen.add_argument("--delta", type=float)
    scen.add_argument("--budgets", type=_ints, help="NCE budgets, e.g. 10,20 or 10..15")
    scen.add_argument("--k", type=_ints, help="seed-set sizes, e.g. 2,4,6")

    g = sub.add_parser("generate", parents=[common], help="write a random scenario")
    g.add_argument("--preset", choices=["stadium", "mall"])
    g.add_argument("--p1", type=float)
    g.add_argument("--p2", type=float)
    g.add_argument("--snap", help="SNAP edge list; a synthetic stand-in is used when omitted")
    g.add_argument("--weight-ceiling", dest="weight_ceiling", type=float)
    g.add_argument("--snapshots", type=int)
    g.add_argument("--beta", type=float)

    r = sub.add_parser("run", parents=[common, scen], help="k-sweep over all methods")
    r.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m])
    ua = sub.add_parser("sweep-ua", parents=[common, scen], help="user-awareness sweep")
    ua.add_argument("--ua-levels", dest="ua_levels", type=_floats)
    ret = sub.add_parser("retention", parents=[common, scen], help="protect the top-l critical devices")
    ret.add_argument("--retention-budgets", dest="retention_budgets", type=_ints)
    sub.add_parser("bandwidth", parents=[common, scen], help="extra bandwidth after the rumor")
    sub.add_parser("nce", parents=[common, scen], help="device criticality")
    sub.add_parser("im", parents=[common, scen], help="targeted-IM seeds from NCE criticality")
    oc = sub.add_parser("oracle-check", parents=[common], help="interdiction MILP vs brute force")
    oc.add_argument("--instances", type=int)
    return p


def load_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command)
    known = {f.name for f in fields(RunConfig)}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {args.config}: {exc}") from None
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for k, v in doc.items():
            setattr(cfg, k, v)
    for k, v in vars(args).items():
        if k in known and k != "command" and v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def _write(cfg: RunConfig, name: str, text: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _bundle(cfg: RunConfig):
    from .scenario import load_scenario

    if not cfg.scenario:
        raise ConfigError("--scenario is required")
    return load_scenario(cfg.scenario)


def cmd_generate(cfg: RunConfig) -> int:
    from .scenario import generate_scenario, save_scenario

    b = generate_scenario(
        cfg.preset, cfg.seed, cfg.snap, cfg.weight_ceiling, p1=cfg.p1, p2=cfg.p2,
        snapshots=cfg.snapshots, beta=cfg.beta,
    )
    path = save_scenario(b, cfg.out)
    print(f"scenario written to {path} (p1={b.meta['p1']}, p2={b.meta['p2']}, links={len(b.interconnection)})")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    from .harness import k_sweep, rows_to_csv, summarize

    rows = k_sweep(_bundle(cfg), cfg.k, cfg.methods, cfg.trials, cfg.seed, cfg.epsilon, cfg.delta, cfg.budgets) if cfg.k else []
    path = _write(cfg, "results.csv", rows_to_csv(rows))
    if rows:
        print(summarize(rows))
    print(f"wrote {path}")
    return EXIT_OK


def _rcf_seeds(cfg, bundle, k):
    from .harness import rcf

    return rcf(bundle, k, cfg.budgets, cfg.epsilon, cfg.delta, cfg.seed)


def cmd_sweep_ua(cfg: RunConfig) -> int:
    from .harness import rows_to_csv, summarize, ua_sweep

    b = _bundle(cfg)
    rows = []
    for k in cfg.k:
        rows += ua_sweep(b, _rcf_seeds(cfg, b, k).seeds, cfg.ua_levels, cfg.trials, cfg.seed, k=k)
    path = _write(cfg, "ua.csv", rows_to_csv(rows))
    print(summarize(rows) if rows else "no rows")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_retention(cfg: RunConfig) -> int:
    from .harness import device_criticality, retention_sweep, rows_to_csv, summarize

    b = _bundle(cfg)
    rows = []
    for k in cfg.k:
        cr = device_criticality(b, cfg.budgets, k)
        rows += retention_sweep(b, _rcf_seeds(cfg, b, k).seeds, cfg.retention_budgets, cfg.trials, cfg.seed, k, cr)
    path = _write(cfg, "retention.csv", rows_to_csv(rows))
    print(summarize(rows) if rows else "no rows")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bandwidth(cfg: RunConfig) -> int:
    from .harness import k_sweep, rows_to_csv

    rows = k_sweep(_bundle(cfg), cfg.k, ["rcf"], cfg.trials, cfg.seed, cfg.epsilon, cfg.delta, cfg.budgets, bandwidth=True)
    path = _write(cfg, "bandwidth.csv", rows_to_csv(rows))
    failed = sum(r.crosscheck != "pass" for r in rows)
    print(f"{len(rows)} rows, {failed} failed re-solve checks; wrote {path}")
    return EXIT_OK


def cmd_nce(cfg: RunConfig) -> int:
    from .harness import device_criticality

    k = cfg.k[0] if cfg.k else 10
    cr = device_criticality(_bundle(cfg), cfg.budgets, k)
    path = _write(cfg, "criticality.csv", "# schema: criticality/v1\n" + cr.to_csv())
    print(f"budgets {cr.budgets}; top devices {cr.ranked()[:10]}; wrote {path}")
    return EXIT_OK


def cmd_im(cfg: RunConfig) -> int:
    k = cfg.k[0] if cfg.k else 10
    res = _rcf_seeds(cfg, _bundle(cfg), k)
    path = _write(cfg, "seeds.csv", res.to_csv())
    print(res.summary())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_oracle_check(cfg: RunConfig) -> int:
    from .cellular import build_modified_graph, small_random_topology
    from .interdiction import brute_force_interdiction, solve_interdiction

    worst = 0.0
    lines = ["# schema: oracle-check/v1", "instance,budget,milp,brute_force,abs_diff"]
    for i in range(cfg.instances):
        top = small_random_topology(cfg.seed * 100_000 + i)
        g = build_modified_graph(top, cfg.beta)
        u = 1 + i % 3
        a = solve_interdiction(g, top.params.bandwidth, u).throughput
        b = brute_force_interdiction(g, top.params.bandwidth, u).throughput
        worst = max(worst, abs(a - b))
        lines.append(f"{i},{u},{a!r},{b!r},{abs(a - b)!r}")
    _write(cfg, "oracle_check.csv", "\n".join(lines) + "\n")
    ok = worst <= 1e-5
    print(f"{cfg.instances} instances, max |MILP - brute force| = {worst:.3g}: {'agree' if ok else 'DISAGREE'}")
    return EXIT_OK if ok else EXIT_MISMATCH


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "sweep-ua": cmd_sweep_ua,
    "retention": cmd_retention,
    "bandwidth": cmd_bandwidth,
    "nce": cmd_nce,
    "im": cmd_im,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
        return COMMANDS[cfg.command](cfg)
    except OracleCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, D2DRumorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
