"""Experiment runner: curricula, periodic greedy evaluation, CSV and SVG.

Training walks the specification list in order, spending a fixed step
budget per specification.  Every eval interval the current policies are
frozen and one greedy episode per specification is scored by discounted
return; per-seed rows go to CSV, and the cross-seed aggregate (mean with
25th/75th percentile band) to a second CSV plus a self-contained SVG.
"""

from __future__ import annotations

import concurrent.futures
import os
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import craftworld, dfa as dfamod, learn, lpopl, ltl
from .dfa import DfaStatus
from .game import ExtendedGame, ExtendedState, RewardScheme
from .ltl import Formula

PER_SEED_HEADER = "step,seed,spec_index,return"
AGGREGATE_HEADER = "step,mean,p25,p75"

_ALGOS = {
    # algo name -> (training scheme, default learner)
    "tabular": ("qlearn", "tabular"),
    "i-tabular": ("qlearn", "tabular"),
    "dqn-l": ("qlearn", "dqn"),
    "i-dqn-l": ("qlearn", "dqn"),
    "lpopl": ("lpopl", "dqn"),
    "i-lpopl": ("lpopl", "dqn"),
}

# Specification families over the nine craft events.  The sequential set
# chains every stage; the interleaving set conjoins independent chains so
# unnecessary ordering between them disappears.

_SEQUENTIAL_SPECS = (
    "F (got_wood & F used_toolshed)",
    "F (got_grass & F used_factory)",
    "F (got_wood & F used_workbench)",
    "F (got_grass & F used_toolshed)",
    "F (got_iron & F (got_wood & F used_factory))",
    "F (got_wood & F (used_toolshed & F (got_grass & F used_workbench)))",
    "F (got_wood & F (used_workbench & F (got_iron & F used_toolshed)))",
    "F (got_wood & F (used_workbench & F (got_iron & F used_workbench)))",
    "F (got_iron & F (got_wood & F (used_factory & F used_bridge)))",
    "F (got_wood & F (used_workbench & F (got_iron & F (used_toolshed & "
    "F (used_axe & F at_shelter)))))",
)

_INTERLEAVING_SPECS = (
    "F (got_wood & F used_toolshed) & F (got_grass & F used_toolshed)",
    "F (got_wood & F used_workbench) & F (got_grass & F used_factory)",
    "F (got_wood & F used_workbench) & F (got_iron & F used_workbench)",
    "F (got_iron & F used_toolshed) & F (got_wood & F used_toolshed)",
    "F (got_wood & F used_factory) & F (got_iron & F used_factory)",
    "F got_wood & F got_grass & F got_iron",
    "F (got_grass & F used_workbench) & F (got_iron & F used_factory)",
    "F (got_wood & F (used_factory & F used_bridge)) & F got_iron",
    "F (got_wood & F (used_workbench & F used_axe)) & F (got_iron & F used_toolshed)",
    "F (got_wood & F at_shelter) & F (got_grass & F at_shelter)",
)


def builtin_specs(name: str) -> list[Formula]:
    """One of the two bundled ten-specification families."""
    if name == "sequential":
        raw = _SEQUENTIAL_SPECS
    elif name == "interleaving":
        raw = _INTERLEAVING_SPECS
    else:
        raise ValueError(f"unknown specification set {name!r}")
    return [ltl.parse(s) for s in raw]


def load_specs(source: str) -> list[Formula]:
    """Builtin set name, or a path to a spec file (one formula per line)."""
    if source in ("sequential", "interleaving"):
        return builtin_specs(source)
    return ltl.parse_spec_lines(Path(source).read_text())


def load_grid(source: str) -> craftworld.GridMap:
    if source in craftworld.BUILTIN_MAPS:
        return craftworld.get_map(source)
    return craftworld.load_map(Path(source).read_text())


@dataclass
class ExperimentConfig:
    algo: str = "i-tabular"
    agents: int = 2
    map: str = "two7"
    specs: str = "sequential"
    steps_per_spec: int | None = None
    eval_every: int = 1_000
    eval_cap: int = 300
    seeds: tuple = (0, 1, 2)
    out_dir: str | None = None
    preset: str | None = None
    # reward scheme
    r_satisfy: float = 1.0
    r_progress: float = 0.0
    r_stall: float = -1.0
    r_violate: float = -1.0
    terminate_on_violation: bool = True
    step_limit: int = 300
    # learner configuration
    learner: str | None = None  # tabular | dqn; None = algo default
    lr: float = 5e-4
    gamma: float | None = None
    alpha: float = 0.5
    batch_size: int = 32
    buffer_capacity: int = 25_000
    target_sync: int = 100
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_frac: float = 0.1
    learn_start: int = 1_000
    max_dfa_states: int = 32


@dataclass
class ResolvedConfig:
    """ExperimentConfig with presets and defaults applied."""

    algo: str
    scheme_kind: str  # qlearn | lpopl
    learner: str      # tabular | dqn
    agents: int
    grid: craftworld.GridMap
    spec_list: list
    steps_per_spec: int
    eval_every: int
    eval_cap: int
    seeds: tuple
    out_dir: str | None
    reward_scheme: RewardScheme
    step_limit: int
    lr: float
    gamma: float
    alpha: float
    batch_size: int
    buffer_capacity: int
    target_sync: int
    eps_schedule: learn.EpsilonSchedule
    learn_start: int
    max_dfa_states: int


def resolve(config: ExperimentConfig) -> ResolvedConfig:
    if config.algo not in _ALGOS:
        raise ValueError(f"unknown algo {config.algo!r}")
    scheme_kind, default_learner = _ALGOS[config.algo]
    learner_kind = config.learner or default_learner
    steps = config.steps_per_spec
    if config.preset == "desk":
        learner_kind = "tabular"
        if steps is None:
            steps = 5_000 if scheme_kind == "qlearn" else 2_500
    elif config.preset == "paper":
        learner_kind = config.learner or default_learner
        if steps is None:
            steps = 50_000 if scheme_kind == "qlearn" else 25_000
    elif config.preset is not None:
        raise ValueError(f"unknown preset {config.preset!r}")
    if steps is None:
        steps = 5_000 if scheme_kind == "qlearn" else 2_500
    if config.eval_every > steps:
        raise ValueError(
            f"eval interval {config.eval_every} exceeds steps per spec {steps}")
    gamma = config.gamma
    if gamma is None:
        if learner_kind == "tabular":
            gamma = 0.9
        else:
            gamma = 0.98 if scheme_kind == "qlearn" else 0.9
    spec_list = load_specs(config.specs)
    grid = load_grid(config.map)
    scheme = RewardScheme(config.r_satisfy, config.r_progress, config.r_stall,
                          config.r_violate, config.terminate_on_violation)
    return ResolvedConfig(
        algo=config.algo, scheme_kind=scheme_kind, learner=learner_kind,
        agents=config.agents, grid=grid, spec_list=spec_list,
        steps_per_spec=steps, eval_every=config.eval_every,
        eval_cap=config.eval_cap, seeds=tuple(config.seeds),
        out_dir=config.out_dir, reward_scheme=scheme,
        step_limit=config.step_limit, lr=config.lr, gamma=gamma,
        alpha=config.alpha, batch_size=config.batch_size,
        buffer_capacity=config.buffer_capacity, target_sync=config.target_sync,
        eps_schedule=learn.EpsilonSchedule(
            config.eps_start, config.eps_end, config.eps_decay_frac),
        learn_start=config.learn_start, max_dfa_states=config.max_dfa_states)


# ---------------------------------------------------------------------------
# Learner construction and greedy evaluation

def _make_learner(rc: ResolvedConfig, agent: int, slot: int, seed: int):
    if rc.learner == "tabular":
        return learn.TabularLearner(
            len(craftworld.Action), alpha=rc.alpha, gamma=rc.gamma)
    feat_len = craftworld.feature_length(rc.max_dfa_states)

    def feature_fn(ext, _grid=rc.grid, _agent=agent, _m=rc.max_dfa_states):
        return craftworld.features(_grid, ext.base, _agent, ext.dfa_state, _m)

    return learn.DqnLearner(
        feature_fn, feat_len, len(craftworld.Action),
        rng_init=learn.rng_stream(seed, f"init/a{agent}/t{slot}"),
        rng_replay=learn.rng_stream(seed, f"replay/a{agent}/t{slot}"),
        gamma=rc.gamma, lr=rc.lr, batch_size=rc.batch_size,
        buffer_capacity=rc.buffer_capacity, target_sync=rc.target_sync,
        learn_start=rc.learn_start)


def _greedy_episode(env: ExtendedGame, joint_fn, gamma: float, cap: int):
    """Run one frozen-policy episode; returns (return, steps, satisfied)."""
    ext = env.reset()
    total = 0.0
    steps = 0
    satisfied = False
    for k in range(cap):
        t = env.step(joint_fn(env, ext))
        total += (gamma ** k) * t.reward
        steps += 1
        ext = t.next_state
        if t.terminal:
            satisfied = dfamod.classify(env.dfa, ext.dfa_state) is DfaStatus.ACCEPTING
            break
    return total, steps, satisfied


def _qlearn_joint_fn(learners_for_spec):
    def joint_fn(env, ext):
        return tuple(l.greedy(ext) for l in learners_for_spec)
    return joint_fn


def _lpopl_joint_fn(bank: lpopl.PolicyBank):
    def joint_fn(env, ext):
        active = bank.taskset.task_of(env.dfa.states[ext.dfa_state])
        return tuple(
            bank.learner(agent, active).greedy(ExtendedState(0, ext.base))
            for agent in range(bank.n_agents))
    return joint_fn


def _eval_all_specs(rc: ResolvedConfig, spec_dfas, joint_fn_for_spec):
    """Greedy evaluation across the whole specification set."""
    results = []
    for j, spec in enumerate(rc.spec_list):
        base = craftworld.CraftWorld(rc.grid, rc.agents)
        env = ExtendedGame(base, spec, rc.reward_scheme,
                           step_limit=rc.eval_cap, compiled=spec_dfas[j])
        ret, steps, sat = _greedy_episode(
            env, joint_fn_for_spec(j), rc.gamma, rc.eval_cap)
        results.append({"spec_index": j, "return": ret,
                        "steps": steps, "satisfied": sat})
    return results


# ---------------------------------------------------------------------------
# Per-seed training

@dataclass
class SeedResult:
    seed: int
    rows: list            # (step, seed, spec_index, return)
    episodes: list        # per-episode (steps, return) records
    policy: dict          # serializable payload, see save/load below


def _train_seed(rc: ResolvedConfig, seed: int) -> SeedResult:
    rng_policies = [learn.rng_stream(seed, f"policy/a{a}") for a in range(rc.agents)]
    spec_dfas = [dfamod.compile(s) for s in rc.spec_list]
    rows = []
    global_step = 0

    if rc.scheme_kind == "qlearn":
        learners = [
            [_make_learner(rc, agent, j, seed) for j in range(len(rc.spec_list))]
            for agent in range(rc.agents)]
        joint_for = lambda j: _qlearn_joint_fn([learners[a][j] for a in range(rc.agents)])

        def on_transition(_step, _t):
            nonlocal global_step
            global_step += 1
            if global_step % rc.eval_every == 0:
                for rec in _eval_all_specs(rc, spec_dfas, joint_for):
                    rows.append((global_step, seed, rec["spec_index"], rec["return"]))

        episodes = []
        base = craftworld.CraftWorld(rc.grid, rc.agents)
        for j, spec in enumerate(rc.spec_list):
            env = ExtendedGame(base, spec, rc.reward_scheme,
                               step_limit=rc.step_limit, compiled=spec_dfas[j])
            episodes += learn.independent_train(
                env, [learners[a][j] for a in range(rc.agents)],
                rc.steps_per_spec, eps_schedule=rc.eps_schedule,
                rng_policies=rng_policies, on_transition=on_transition)
        policy = _payload_qlearn(rc, learners)
    else:
        taskset = lpopl.extract_tasks(rc.spec_list)
        bank = lpopl.PolicyBank(
            rc.agents, taskset,
            lambda agent, task: _make_learner(rc, agent, task, seed))
        joint_fn = _lpopl_joint_fn(bank)
        joint_for = lambda j: joint_fn

        def on_transition(_step, _t):
            nonlocal global_step
            global_step += 1
            if global_step % rc.eval_every == 0:
                for rec in _eval_all_specs(rc, spec_dfas, joint_for):
                    rows.append((global_step, seed, rec["spec_index"], rec["return"]))

        base = craftworld.CraftWorld(rc.grid, rc.agents)
        curriculum = lpopl.Curriculum(rc.spec_list, rc.steps_per_spec)
        episodes = lpopl.train_lpopl(
            base, rc.spec_list, bank, curriculum, scheme=rc.reward_scheme,
            eps_schedule=rc.eps_schedule, rng_policies=rng_policies,
            step_limit=rc.step_limit, on_transition=on_transition)
        policy = _payload_lpopl(rc, bank)

    return SeedResult(seed, rows, episodes, policy)


# ---------------------------------------------------------------------------
# Policy serialization

def _learner_payload(learner):
    if isinstance(learner, learn.TabularLearner):
        return {"kind": "tabular", "n_actions": learner.table.n_actions,
                "values": dict(learner.table.values)}
    return {"kind": "dqn", "sizes": list(learner.net.sizes),
            "weights": [w.copy() for w in learner.net.weights],
            "biases": [b.copy() for b in learner.net.biases]}


def _payload_qlearn(rc, learners):
    return {
        "format": 1, "scheme": "qlearn", "algo": rc.algo,
        "agents": rc.agents, "gamma": rc.gamma,
        "max_dfa_states": rc.max_dfa_states,
        "specs": [ltl.render(s) for s in rc.spec_list],
        "policies": [[_learner_payload(l) for l in per_agent]
                     for per_agent in learners],
    }


def _payload_lpopl(rc, bank):
    return {
        "format": 1, "scheme": "lpopl", "algo": rc.algo,
        "agents": rc.agents, "gamma": rc.gamma,
        "max_dfa_states": rc.max_dfa_states,
        "specs": [ltl.render(s) for s in rc.spec_list],
        "tasks": [ltl.render(t) for t in bank.taskset.tasks],
        "policies": [[_learner_payload(bank.learner(a, t))
                      for t in range(len(bank.taskset))]
                     for a in range(bank.n_agents)],
    }


class _FrozenPolicy:
    """Greedy-only learner rebuilt from a payload."""

    def __init__(self, payload, feature_fn):
        self.kind = payload["kind"]
        if self.kind == "tabular":
            self.table = learn.QTable(payload["n_actions"])
            self.table.values = dict(payload["values"])
        else:
            net = learn.Mlp.__new__(learn.Mlp)
            net.sizes = tuple(payload["sizes"])
            net.weights = [np.asarray(w) for w in payload["weights"]]
            net.biases = [np.asarray(b) for b in payload["biases"]]
            self.net = net
            self.feature_fn = feature_fn

    def greedy(self, ext):
        if self.kind == "tabular":
            return learn.act(self.table.row(learn.tabular_key(ext)), 0.0)
        return learn.act(self.net.forward(self.feature_fn(ext)), 0.0)


def save_policy(path, payload):
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_policy(path):
    with open(path, "rb") as fh:
        return pickle.load(fh)


def evaluate_policy_payload(payload, grid, specs=None, *, scheme=None,
                            eval_cap: int = 300):
    """Greedy per-spec evaluation of a serialized policy.

    Returns one record per specification with the discounted return,
    episode length, and whether the specification was satisfied.
    """
    scheme = scheme if scheme is not None else RewardScheme()
    agents = payload["agents"]
    gamma = payload["gamma"]
    max_dfa = payload["max_dfa_states"]
    spec_list = specs if specs is not None else [
        ltl.parse(s) for s in payload["specs"]]

    def feature_fn_for(agent):
        def feature_fn(ext):
            return craftworld.features(grid, ext.base, agent, ext.dfa_state, max_dfa)
        return feature_fn

    if payload["scheme"] == "qlearn":
        frozen = [[_FrozenPolicy(p, feature_fn_for(a))
                   for p in payload["policies"][a]] for a in range(agents)]

        def joint_fn_for(j):
            def joint_fn(env, ext):
                return tuple(frozen[a][j].greedy(ext) for a in range(agents))
            return joint_fn
    else:
        tasks = [ltl.parse(t) for t in payload["tasks"]]
        index = {t: i for i, t in enumerate(tasks)}
        frozen = [[_FrozenPolicy(p, feature_fn_for(a))
                   for p in payload["policies"][a]] for a in range(agents)]

        def joint_fn_for(j):
            def joint_fn(env, ext):
                residual = env.dfa.states[ext.dfa_state]
                if residual not in index:
                    raise lpopl.TaskDesyncError(ltl.render(residual))
                active = index[residual]
                return tuple(
                    frozen[a][active].greedy(ExtendedState(0, ext.base))
                    for a in range(agents))
            return joint_fn

    results = []
    for j, spec in enumerate(spec_list):
        base = craftworld.CraftWorld(grid, agents)
        env = ExtendedGame(base, spec, scheme, step_limit=eval_cap)
        ret, steps, sat = _greedy_episode(env, joint_fn_for(j), gamma, eval_cap)
        results.append({"spec_index": j, "return": ret,
                        "steps": steps, "satisfied": sat})
    return results


# ---------------------------------------------------------------------------
# CSV and aggregation

def write_per_seed_csv(path, rows):
    lines = [PER_SEED_HEADER]
    for step, seed, spec_index, ret in rows:
        lines.append(f"{step},{seed},{spec_index},{ret!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_per_seed_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != PER_SEED_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r} in {path}")
    rows = []
    for line in lines[1:]:
        step, seed, spec_index, ret = line.split(",")
        rows.append((int(step), int(seed), int(spec_index), float(ret)))
    return rows


def aggregate_rows(per_seed_rows):
    """Cross-seed mean and 25th/75th percentiles of per-step performance.

    Per seed and step the returns are first averaged over the
    specification set; the percentile definition is the linear
    interpolation one.  Seeds must share the same step grid.
    """
    if not per_seed_rows:
        raise ValueError("no rows to aggregate")
    per_seed_means = []
    grids = []
    for rows in per_seed_rows:
        by_step = {}
        for step, _seed, _j, ret in rows:
            by_step.setdefault(step, []).append(ret)
        means = {step: sum(v) / len(v) for step, v in by_step.items()}
        per_seed_means.append(means)
        grids.append(tuple(sorted(means)))
    if len(set(grids)) != 1:
        raise ValueError("per-seed step grids are misaligned")
    out = []
    for step in grids[0]:
        vals = [m[step] for m in per_seed_means]
        out.append((step, float(np.mean(vals)),
                    float(np.percentile(vals, 25)),
                    float(np.percentile(vals, 75))))
    return out


def write_aggregate_csv(path, agg):
    lines = [AGGREGATE_HEADER]
    for step, mean, p25, p75 in agg:
        lines.append(f"{step},{mean!r},{p25!r},{p75!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def aggregate(per_seed_paths, out_path=None):
    """Aggregate per-seed CSV files; optionally write the aggregate CSV."""
    agg = aggregate_rows([read_per_seed_csv(p) for p in per_seed_paths])
    if out_path is not None:
        write_aggregate_csv(out_path, agg)
    return agg


# ---------------------------------------------------------------------------
# SVG plot: mean line with the p25-p75 band, no external renderer

def render_curve_svg(agg, title="greedy evaluation return") -> str:
    width, height = 640, 400
    ml, mr, mt, mb = 60, 20, 30, 40
    inner_w, inner_h = width - ml - mr, height - mt - mb
    steps = [a[0] for a in agg]
    lows = [a[2] for a in agg]
    highs = [a[3] for a in agg]
    means = [a[1] for a in agg]
    x0, x1 = min(steps), max(steps)
    y0, y1 = min(lows + means), max(highs + means)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return ml + inner_w * (x - x0) / (x1 - x0)

    def sy(y):
        return mt + inner_h * (1 - (y - y0) / (y1 - y0))

    def pt(x, y):
        return f"{sx(x):.2f},{sy(y):.2f}"

    band = " ".join([pt(s, h) for s, h in zip(steps, highs)]
                    + [pt(s, l) for s, l in zip(reversed(steps), reversed(lows))])
    mean_line = " ".join(pt(s, m) for s, m in zip(steps, means))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
        f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>',
        f'<polyline points="{mean_line}" fill="none" stroke="#08519c" stroke-width="1.5"/>',
        f'<line x1="{ml}" y1="{mt + inner_h}" x2="{ml + inner_w}" y2="{mt + inner_h}" '
        f'stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + inner_h}" stroke="black"/>',
        f'<text x="{ml}" y="{height - 8}" font-family="sans-serif" '
        f'font-size="11">{x0}</text>',
        f'<text x="{ml + inner_w}" y="{height - 8}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{x1}</text>',
        f'<text x="{ml - 6}" y="{sy(y0):.2f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y0:.2f}</text>',
        f'<text x="{ml - 6}" y="{sy(y1):.2f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y1:.2f}</text>',
        f'<text x="{(ml + inner_w / 2):.0f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">training step</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Top-level run

@dataclass
class RunResult:
    config: ExperimentConfig
    seed_results: list
    aggregate: list
    per_seed_paths: list = field(default_factory=list)
    aggregate_path: str | None = None
    svg_path: str | None = None
    policy_paths: list = field(default_factory=list)


def run(config: ExperimentConfig) -> RunResult:
    """Train per the config, evaluate periodically, and write outputs."""
    rc = resolve(config)
    if rc.out_dir is None:
        raise ValueError("out_dir is required")
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    workers = int(os.environ.get("TG_THREADS", "1") or "1")
    if workers > 1 and len(rc.seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(workers, len(rc.seeds))) as pool:
            seed_results = list(pool.map(_train_seed, [rc] * len(rc.seeds), rc.seeds))
    else:
        seed_results = [_train_seed(rc, seed) for seed in rc.seeds]

    per_seed_paths = []
    policy_paths = []
    for res in seed_results:
        csv_path = out / f"seed{res.seed}.csv"
        write_per_seed_csv(csv_path, res.rows)
        per_seed_paths.append(str(csv_path))
        pol_path = out / f"policy_seed{res.seed}.pkl"
        save_policy(pol_path, res.policy)
        policy_paths.append(str(pol_path))

    agg = aggregate_rows([res.rows for res in seed_results])
    agg_path = out / "aggregate.csv"
    write_aggregate_csv(agg_path, agg)
    svg_path = out / "returns.svg"
    svg_path.write_text(render_curve_svg(
        agg, title=f"{rc.algo} on {config.specs} ({rc.agents} agents)"))

    return RunResult(config, seed_results, agg, per_seed_paths,
                     str(agg_path), str(svg_path), policy_paths)
