"""Scenario orchestration: solves with caching and the analysis subcommands."""

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..cconvex import kink_mask
from ..cost import CostModel, check_conditions
from ..errors import InvalidParameterError, MissingArtifactError
from ..geometry import john_normalize
from ..grid import Grid, dilate
from ..potential import read_potential, write_potential
from ..regularity.boundary import boundary_heights
from ..regularity.decay import levelset_decay
from ..regularity.engulfing import engulfing_estimate, sample_centers
from ..regularity.hessian import hessian_field
from ..regularity.sections import SectionMaker
from ..regularity.singular import singular_detect
from ..regularity.w2p import w2p_norm
from ..transport import (reconstruct_potential, sample_density, solve_discrete, write_plan,
                         read_plan)
from . import svg
from .config import scenario_hash, solve_key, sweep_configs

COMMANDS = ("check-cost", "solve", "sections", "engulf", "decay", "w2p", "singular", "boundary")


# -- small io helpers ------------------------------------------------------------

def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- problem construction ---------------------------------------------------------

def build_cost(cfg):
    return CostModel.from_spec(cfg["cost"], cfg["source"]["domain"]["box"],
                               cfg["target"]["domain"]["box"])


def build_clouds(cfg):
    seed = cfg["experiment"]["seed"]
    g = cfg["grid"]
    src_spec = cfg["source"]["density"]
    tgt_spec = cfg["target"]["density"]
    src = sample_density(src_spec, g["n_atoms"], seed=seed, jitter=src_spec.get("jitter", False))
    tgt = sample_density(tgt_spec, g.get("n_target_atoms", g["n_atoms"]), seed=seed + 1,
                         jitter=tgt_spec.get("jitter", False))
    return src, tgt


def solve_config(cfg):
    """Sample both clouds and solve; returns ``(cost, source, target, plan)``."""
    cost = build_cost(cfg)
    src, tgt = build_clouds(cfg)
    s = cfg["solver"]
    plan = solve_discrete(cost, src, tgt, method=s["method"], epsilon=s.get("epsilon"),
                          max_iter=s.get("max_iter", 5000), tol=s.get("tol", 1e-9))
    return cost, src, tgt, plan


def eval_grid(cfg, resolution):
    box = cfg["grid"].get("eval_box", cfg["source"]["domain"]["box"])
    return Grid.from_box(box, resolution)


def step_multiplier(cfg, grid):
    step = cfg["grid"].get("hessian_step")
    if step is None:
        return 1
    return max(1, int(round(step / grid.spacing)))


def region_mask(cfg, grid):
    X = cfg["experiment"].get("X_domain")
    if X is None:
        return grid.interior_mask(1)
    if X["kind"] == "ball":
        return grid.ball_mask(X["center"], X["radius"])
    lo, hi = np.asarray(X["box"][0]), np.asarray(X["box"][1])
    c = grid.centers
    return np.all((c >= lo) & (c <= hi), axis=-1)


def potential_for(cfg, plan, cost, target, resolution):
    grid = eval_grid(cfg, resolution)
    return reconstruct_potential(plan, cost, target, grid)


# -- artifacts ------------------------------------------------------------------

@dataclass
class RunArtifact:
    scenario_hash: str
    command: str
    potential: list = field(default_factory=list)
    plan: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    tool_version: str = __version__
    wall_clock: dict = field(default_factory=dict)

    def as_dict(self):
        return {"scenario_hash": self.scenario_hash, "command": self.command,
                "potential": [str(p) for p in self.potential],
                "plan": [str(p) for p in self.plan], "reports": [str(p) for p in self.reports],
                "tool_version": self.tool_version, "wall_clock": self.wall_clock}


class Runner:
    """Runs subcommands of one scenario inside ``run_dir``."""

    def __init__(self, cfg, run_dir, force=False, threads=1):
        self.cfg = cfg
        self.run_dir = Path(run_dir)
        self.force = force
        self.threads = int(threads)

    def solve_dir(self, cfg):
        return self.run_dir / "solves" / solve_key(cfg)

    # solve ------------------------------------------------------------------
    def _solve_one(self, cfg, art):
        d = self.solve_dir(cfg)
        pot = d / "potential.csv"
        if pot.exists() and not self.force:
            art.potential.append(pot)
            art.plan.append(d / "plan.csv")
            return json.loads((d / "summary.json").read_text(encoding="utf-8"))
        t0 = time.perf_counter()
        cost, src, tgt, plan = solve_config(cfg)
        art.wall_clock[f"solve:{solve_key(cfg)}"] = time.perf_counter() - t0
        u = potential_for(cfg, plan, cost, tgt, cfg["grid"]["eval_resolution"][0])
        d.mkdir(parents=True, exist_ok=True)
        write_potential(pot, u)
        write_plan(d / "plan.csv", plan)
        write_csv(d / "source.csv", ["i"] + [f"x_{k + 1}" for k in range(src.dim)] + ["weight"],
                  [[i, *p, w] for i, (p, w) in enumerate(zip(src.positions, src.weights))])
        write_csv(d / "duals.csv", ["i", "psi"], list(enumerate(plan.source_duals)))
        summary = {"objective": plan.objective, "gap": plan.gap, "method": plan.method,
                   "epsilon": plan.epsilon, "n_source": len(src), "n_target": len(tgt),
                   "support_size": int(len(plan.mass)),
                   "max_row_error": float(np.abs(plan.row_sums() - src.weights).max()),
                   "max_col_error": float(np.abs(plan.col_sums() - tgt.weights).max())}
        if cfg["experiment"].get("remark_closeness_check"):
            q = 0.5 * (u.grid.centers ** 2).sum(-1)
            summary["sup_distance_to_quadratic"] = float(np.abs(u.values - q).max())
        write_json(d / "summary.json", summary)
        art.potential.append(pot)
        art.plan.append(d / "plan.csv")
        return summary

    def load(self, cfg, resolution):
        """Potential of ``cfg`` on its eval grid at ``resolution`` (needs a prior solve)."""
        pot = self.solve_dir(cfg) / "potential.csv"
        if not pot.exists():
            raise MissingArtifactError(
                f"no solve found for scenario {cfg['name']!r}; run `lab solve` first")
        u, _ = read_potential(pot, grid=eval_grid(cfg, resolution))
        return u

    # dispatch -----------------------------------------------------------------
    def run(self, command):
        if command not in COMMANDS:
            raise InvalidParameterError(f"unknown subcommand {command!r}")
        art = RunArtifact(scenario_hash(self.cfg), command)
        t0 = time.perf_counter()
        getattr(self, "cmd_" + command.replace("-", "_"))(art)
        art.wall_clock["total"] = time.perf_counter() - t0
        write_json(self.run_dir / command / "artifact.json", art.as_dict())
        return art

    def _out(self, command, name):
        return self.run_dir / command / name

    @staticmethod
    def _suffix(label):
        return f"_{label}" if label else ""

    def cmd_check_cost(self, art):
        for label, cfg in sweep_configs(self.cfg):
            rep = check_conditions(build_cost(cfg), n_samples=100, seed=cfg["experiment"]["seed"])
            art.reports.append(write_json(self._out("check-cost", f"conditions{self._suffix(label)}.json"),
                                          rep.as_dict()))

    def cmd_solve(self, art):
        out = {}
        for label, cfg in sweep_configs(self.cfg):
            out[label or "base"] = self._solve_one(cfg, art)
        art.reports.append(write_json(self._out("solve", "summary.json"), out))

    def cmd_sections(self, art):
        for label, cfg in sweep_configs(self.cfg):
            ex = cfg["experiment"]
            res = cfg["grid"]["eval_resolution"][0]
            u = self.load(cfg, res)
            m = step_multiplier(cfg, u.grid)
            maker = SectionMaker(u, u.cost, m)
            rng = np.random.default_rng(ex["seed"])
            centers = sample_centers(u.grid, u.grid.box.mean(axis=0), ex["sample_radius"],
                                     min(ex["samples"], 25), rng)
            rows = []
            for idx in centers:
                for h in ex["h_list"]:
                    s = maker.section(idx, h)
                    try:
                        john_normalize(s, h)
                    except Exception:  # degenerate sections are reported without a sandwich
                        pass
                    r = s.as_row()
                    rows.append([*r["x0"], *r["y0"], h, r["cell_count"], r["volume"],
                                 r["connected"], r["sandwich_ratio"], r["norm_size"]])
            n = u.dim
            head = ([f"x0_{k + 1}" for k in range(n)] + [f"y0_{k + 1}" for k in range(n)]
                    + ["h", "cell_count", "volume", "connected", "sandwich_ratio", "norm_size"])
            art.reports.append(write_csv(self._out("sections", f"sections{self._suffix(label)}.csv"),
                                         head, rows))

    def cmd_engulf(self, art):
        for label, cfg in sweep_configs(self.cfg):
            ex = cfg["experiment"]
            u = self.load(cfg, cfg["grid"]["eval_resolution"][0])
            tab = engulfing_estimate(u, u.cost, ex["samples"], ex["h_list"], seed=ex["seed"],
                                     radius=ex["sample_radius"],
                                     multiplier=step_multiplier(cfg, u.grid))
            head, rows = tab.csv_rows()
            art.reports.append(write_csv(self._out("engulf", f"engulf{self._suffix(label)}.csv"),
                                         head, rows))

    def cmd_decay(self, art):
        for label, cfg in sweep_configs(self.cfg):
            ex = cfg["experiment"]
            u = self.load(cfg, cfg["grid"]["eval_resolution"][0])
            tab = levelset_decay(u, u.cost, ex["M"], ex["N"], ex["K_levels"], ex["rho0"],
                                 multiplier=step_multiplier(cfg, u.grid), h0=ex["h0"],
                                 sigma=ex["sigma"], C_prime=ex["C_prime"], seed=ex["seed"])
            head, rows = tab.csv_rows()
            art.reports.append(write_csv(self._out("decay", f"decay{self._suffix(label)}.csv"),
                                         head, rows))
            sh = tab.shape
            art.reports.append(write_json(
                self._out("decay", f"constants{self._suffix(label)}.json"),
                {"theta": sh.theta, "beta": sh.beta, "C_hat": sh.C_hat, "samples": sh.samples,
                 "aborted": tab.aborted, "domain_measure": tab.domain_measure,
                 "fraction_D1": tab.fraction(1), "max_ratio": tab.max_ratio(),
                 "label": label}))

    def cmd_w2p(self, art):
        rows = []
        for label, cfg in sweep_configs(self.cfg):
            ex = cfg["experiment"]
            for res in cfg["grid"]["eval_resolution"]:
                u = self.load(cfg, res)
                H = hessian_field(u, step_multiplier(cfg, u.grid))
                region = region_mask(cfg, u.grid)
                for p in ex["p"]:
                    r = w2p_norm(H, region, p, M=ex["M"])
                    rows.append([label, res, u.grid.spacing, H.step, p, r.direct, r.bound,
                                 r.region_measure, r.dropped_cells])
        head = ["label", "resolution", "spacing", "step", "p", "direct", "layer_cake_bound",
                "region_measure", "dropped_cells"]
        art.reports.append(write_csv(self._out("w2p", "w2p.csv"), head, rows))

    def cmd_singular(self, art):
        rows = []
        for label, cfg in sweep_configs(self.cfg):
            ex = cfg["experiment"]
            for res in cfg["grid"]["eval_resolution"]:
                u = self.load(cfg, res)
                g = u.grid
                m = step_multiplier(cfg, g)
                X = region_mask(cfg, g)
                S = singular_detect(u, u.cost, ex["h0"], ex["ratio_cap"], region=X, multiplier=m)
                H = hessian_field(u, m)
                p = 2.0 if 2.0 in ex["p"] else ex["p"][0]
                w = w2p_norm(H, X & ~dilate(S.cells, 3), p, M=ex["M"])
                tag = f"{self._suffix(label)}_r{res}"
                mask_path = self._out("singular", f"mask{tag}.txt")
                write_mask(mask_path, g, S.cells)
                art.reports.append(mask_path)
                overlay = svg.mask_overlay(X, S.cells, f"singular set, {res} cells per side")
                p_svg = self._out("singular", f"overlay{tag}.svg")
                p_svg.write_text(overlay, encoding="utf-8")
                art.reports.append(p_svg)
                rows.append([label, res, g.spacing, m, S.measure, S.fraction(X),
                             int(S.kinks.sum()), int((S.raw & ~S.kinks).sum()), int(S.cells.sum()),
                             p, w.direct])
        head = ["label", "resolution", "spacing", "step_multiplier", "measure", "fraction",
                "kink_cells", "sandwich_cells", "cells", "p", "w2p_outside"]
        art.reports.append(write_csv(self._out("singular", "singular.csv"), head, rows))

    def cmd_boundary(self, art):
        for label, cfg in sweep_configs(self.cfg):
            ex = cfg["experiment"]
            u = self.load(cfg, cfg["grid"]["eval_resolution"][0])
            g = u.grid
            m = step_multiplier(cfg, g)
            X = region_mask(cfg, g)
            p = 2.0 if 2.0 in ex["p"] else ex["p"][0]
            prof = boundary_heights(u, u.cost, X, ex["boundary_h0"], p=p, K_bands=ex["K_bands"],
                                    multiplier=m, sigma=ex["sigma"], C_prime=ex["C_prime"],
                                    seed=ex["seed"], max_family=100000)
            head, rows = prof.csv_rows()
            sfx = self._suffix(label)
            art.reports.append(write_csv(self._out("boundary", f"families{sfx}.csv"), head, rows))
            cells = np.argwhere(X)
            rng = np.random.default_rng(ex["seed"])
            pick = cells[np.sort(rng.choice(len(cells), min(ex["boundary_samples"], len(cells)),
                                            replace=False))]
            rows = [[*g.center_of(c), prof.hbar[tuple(c)], bool(prof.interior[tuple(c)])]
                    for c in pick]
            head = [f"x_{k + 1}" for k in range(g.ndim)] + ["hbar", "interior"]
            art.reports.append(write_csv(self._out("boundary", f"hbar_samples{sfx}.csv"),
                                         head, rows))
            write_json(self._out("boundary", f"fit{sfx}.json"), {"p": p, "rate": prof.rate})


def write_mask(path, grid, mask):
    """JSON header ``{box, spacing, shape}`` then one row of 0/1 per first-axis index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = np.asarray(mask, dtype=np.uint8).reshape(grid.shape[0], -1)
    lines = [json.dumps({"box": [list(grid.lo), list(grid.hi)], "spacing": grid.spacing,
                         "shape": list(grid.shape)}, sort_keys=True)]
    lines += ["".join("1" if v else "0" for v in row) for row in m]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mask(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    arr = np.array([[c == "1" for c in ln] for ln in lines[1:]], dtype=bool)
    return arr.reshape(header["shape"]), header


def run_scenario(cfg, command, out_dir, force=False, threads=1):
    """Run one subcommand of a validated config under ``out_dir/<name>``."""
    runner = Runner(cfg, Path(out_dir) / cfg["name"], force=force, threads=threads)
    return runner.run(command)


__all__ = ["COMMANDS", "Runner", "RunArtifact", "run_scenario", "solve_config", "build_cost",
           "build_clouds", "eval_grid", "step_multiplier", "region_mask", "write_csv",
           "read_csv", "write_json", "write_mask", "read_mask", "kink_mask", "read_plan"]
