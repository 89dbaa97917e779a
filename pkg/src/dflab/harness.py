"""Configuration, seeding and orchestration: the single entry point that
wires the samplers, verifiers, simulator and transport probes together.

Every run is a pure function of (config, seed): task seeds derive from the
master seed and a fixed per-task index, reports are serialized with sorted
keys and no timestamps, and artifacts are written in a fixed order, so
byte-identical outputs are reproducible regardless of worker count.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import os
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import reports as reports_mod
from .cylinder import (CylinderFunction, FlowDiffeo, TestFunction,
                       WeightProfile, verify_B_martingale, verify_ibp,
                       verify_ibp_basket, verify_pqi)
from .diffusion import (dirichlet_energy, paths_to_csv, simulate,
                        verify_ergodic_component, verify_invariance,
                        verify_martingale)
from .geometry import Manifold, TrigFunction, VectorField
from .measures import (AtomicMeasure, sample_df_batch, verify_mecke,
                       verify_sethuraman)
from .reports import Report, abs_check
from .transport import rademacher_probe, varadhan_probe, w2_arrays

__all__ = ["SUBCOMMANDS", "load_config", "validate_config", "run",
           "ConfigError"]


class ConfigError(ValueError):
    """Schema violation; carries the offending JSON path."""


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

def _obj(properties: dict, required: list | None = None) -> dict:
    return {"type": "object", "properties": properties,
            "required": required or [], "additionalProperties": False}

_TRIG_TERM = {"type": "array", "minItems": 3, "maxItems": 3, "prefixItems": [
    {"type": "number"},
    {"type": "array", "items": {"type": "integer"}, "minItems": 1},
    {"enum": ["cos", "sin"]}], "items": False}
_TRIG = {"type": "array", "items": _TRIG_TERM, "minItems": 1}
_RHO = _obj({"poly": {"type": "array", "items": {"type": "number"},
                      "minItems": 1},
             "eps": {"type": "number", "minimum": 0},
             "delta": {"type": "number", "minimum": 0}})
_FHAT = _obj({"f": _TRIG, "rho": _RHO}, required=["f"])
_CYL = _obj({"F": {"type": "array", "minItems": 1, "items": {
                "type": "array", "minItems": 2, "maxItems": 2,
                "prefixItems": [
                    {"type": "number"},
                    {"type": "array", "items": {"type": "integer",
                                                "minimum": 0}}],
                "items": False}},
             "fhats": {"type": "array", "items": _FHAT, "minItems": 1}},
            required=["F", "fhats"])
_FIELD = {"type": "array", "items": _TRIG, "minItems": 1}
_TGRID = _obj({"dt": {"type": "number", "exclusiveMinimum": 0},
               "horizon": {"type": "number", "exclusiveMinimum": 0}},
              required=["dt", "horizon"])

CONFIG_SCHEMA = _obj({
    "manifold": _obj({
        "kind": {"enum": ["flat_torus", "sphere2"]},
        "dim": {"type": "integer", "minimum": 1},
        "side": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "metric_scale": {"type": "number", "exclusiveMinimum": 0},
    }),
    "truncation": _obj({
        "n_atoms": {"oneOf": [{"enum": ["auto"]},
                              {"type": "integer", "minimum": 1}]},
        "tail_policy": {"enum": ["renormalize", "lump", "keep"]},
    }),
    "seed": {"type": "integer", "minimum": 0},
    "out_dir": {"type": "string"},
    "tolerance_sigmas": {"type": "number", "exclusiveMinimum": 0},
    "baskets": _obj({
        "test_functions": {"type": "array", "items": _FHAT, "minItems": 1},
        "vector_fields": {"type": "array", "items": _FIELD, "minItems": 1},
        "cylinder_functions": {"type": "array", "items": _CYL,
                               "minItems": 1},
    }),
    "tasks": _obj({
        "sample-df": _obj({"N": {"type": "integer", "minimum": 1}}),
        "verify-mecke": _obj({"N": {"type": "integer", "minimum": 1}}),
        "verify-sethuraman": _obj({
            "N": {"type": "integer", "minimum": 1},
            "negative_control_N": {"type": "integer", "minimum": 0},
        }),
        "verify-ibp": _obj({"N": {"type": "integer", "minimum": 1}}),
        "verify-pqi": _obj({
            "N": {"type": "integer", "minimum": 1},
            "n": {"type": "integer", "minimum": 2},
            "flow_step": {"type": "number", "exclusiveMinimum": 0},
            "u": _CYL,
            "translation": {"type": "array",
                            "items": {"type": "number"}, "minItems": 1},
            "gradient_field": _FIELD,
        }),
        "verify-bmart": _obj({
            "N": {"type": "integer", "minimum": 1},
            "eps": {"type": "number", "exclusiveMinimum": 0},
            "delta": {"type": "number", "exclusiveMinimum": 0},
        }),
        "simulate": _obj({
            "n_paths": {"type": "integer", "minimum": 1},
            "t_grid": _TGRID,
        }),
        "verify-martingale": _obj({
            "n_paths": {"type": "integer", "minimum": 2},
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "horizon": {"type": "number", "exclusiveMinimum": 0},
            "qv_rel_tol": {"type": "number", "exclusiveMinimum": 0},
            "u": _CYL,
        }),
        "verify-invariance": _obj({
            "N": {"type": "integer", "minimum": 1},
            "t_list": {"type": "array", "items": {"type": "number",
                                                  "minimum": 0},
                       "minItems": 2},
        }),
        "verify-ergodic": _obj({
            "N": {"type": "integer", "minimum": 1},
            "weights": {"type": "array", "minItems": 1,
                        "items": {"type": "number", "exclusiveMinimum": 0}},
            "t_list": {"type": "array", "minItems": 1,
                       "items": {"type": "number", "minimum": 0}},
        }),
        "energy": _obj({"N": {"type": "integer", "minimum": 1},
                        "u": _CYL}),
        "w2": _obj({"fixture": {"type": "string"}}),
        "varadhan": _obj({"fixture": {"type": "string"},
                          "N": {"type": "integer", "minimum": 1}}),
        "rademacher": _obj({
            "N": {"type": "integer", "minimum": 1},
            "h": {"type": "number", "exclusiveMinimum": 0},
            "tol_factor": {"type": "number", "exclusiveMinimum": 0},
        }),
    }),
}, required=["seed"])

# fixed per-task seed indices; appending is fine, renumbering is not
SUBCOMMANDS = ["sample-df", "verify-mecke", "verify-sethuraman",
               "verify-ibp", "verify-pqi", "verify-bmart", "simulate",
               "verify-martingale", "verify-invariance", "verify-ergodic",
               "energy", "w2", "varadhan", "rademacher"]


def validate_config(cfg: dict) -> None:
    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ConfigError(f"config invalid at {e.json_path}: {e.message}")


def default_config() -> dict:
    text = importlib.resources.files("dflab.configs").joinpath(
        "default.json").read_text()
    return json.loads(text)


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Load, overlay env/CLI overrides, validate and resolve defaults."""
    if path is None:
        cfg = default_config()
    else:
        with open(path) as fh:
            cfg = json.load(fh)
    env_seed = os.environ.get("DFLAB_SEED")
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    env_out = os.environ.get("DFLAB_OUT")
    if env_out is not None:
        cfg["out_dir"] = env_out
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", 0)
    validate_config(cfg)
    base = default_config()
    # resolve against packaged defaults without mutating user blocks
    for block in ("manifold", "truncation", "baskets", "tasks"):
        merged = base.get(block, {}) | cfg.get(block, {})
        cfg[block] = merged
    cfg.setdefault("out_dir", "dflab-out")
    cfg.setdefault("tolerance_sigmas", 3.0)
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of the scientific content; ignores where outputs are written."""
    scrubbed = {k: v for k, v in cfg.items() if k != "out_dir"}
    blob = json.dumps(scrubbed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _manifold(cfg: dict) -> Manifold:
    m = cfg["manifold"]
    return Manifold(kind=m["kind"], dim=m["dim"], side=m["side"],
                    beta=m["beta"], metric_scale=m.get("metric_scale", 1.0))

def _n_atoms(cfg: dict):
    n = cfg["truncation"]["n_atoms"]
    return None if n == "auto" else int(n)

def _trig(terms, man: Manifold) -> TrigFunction:
    return TrigFunction.from_terms(
        [(t[0], t[1], t[2]) for t in terms], man.dim, man.side)

def _field(component_terms, man: Manifold) -> VectorField:
    return VectorField(tuple(_trig(t, man) for t in component_terms))

def _cyl(d: dict, man: Manifold) -> CylinderFunction:
    return CylinderFunction.from_config(d, man)

def _rng_for(cfg: dict, task: str) -> np.random.Generator:
    idx = SUBCOMMANDS.index(task)
    return np.random.default_rng(
        np.random.SeedSequence(entropy=cfg["seed"], spawn_key=(idx,)))

def _fixture(name: str) -> dict:
    path = Path(name)
    if path.exists():
        return json.loads(path.read_text())
    return json.loads(importlib.resources.files("dflab.configs")
                      .joinpath(name).read_text())


# ---------------------------------------------------------------------------
# Task runners
# ---------------------------------------------------------------------------

def _run_sample_df(cfg, man, rng, artifacts):
    N = cfg["tasks"]["sample-df"]["N"]
    batch = sample_df_batch(man, N, _n_atoms(cfg), rng,
                            cfg["truncation"]["tail_policy"])
    report = Report("sample-df", meta={"N": N, "beta": man.beta})
    sums = batch.weights.sum(axis=1) + batch.tails
    report.add(abs_check("sample-df weights+tail==1",
                         float(np.abs(sums - 1.0).max()), 0.0, 1e-12))
    rows = ["sample_id,atom_id,weight" +
            "".join(f",coord_{j + 1}" for j in range(man.dim))]
    for i in range(min(N, 200)):  # artifact keeps a readable prefix
        for a in range(batch.weights.shape[1]):
            rows.append(f"{i},{a},{float(batch.weights[i, a])!r}" + "".join(
                f",{float(batch.locations[i, a, j])!r}"
                for j in range(man.dim)))
    artifacts["samples.csv"] = "\n".join(rows) + "\n"
    artifacts["sample0.json"] = batch.measure(0).to_json()
    report.meta["mean_top_weight"] = float(batch.weights[:, 0].mean())
    report.meta["mean_tail"] = float(batch.tails.mean())
    return report


def _run_mecke(cfg, man, rng, artifacts):
    return verify_mecke(man, None, cfg["tasks"]["verify-mecke"]["N"], rng,
                        n_atoms=_n_atoms(cfg))


def _run_sethuraman(cfg, man, rng, artifacts):
    t = cfg["tasks"]["verify-sethuraman"]
    rep = verify_sethuraman(man, None, t["N"], rng, n_atoms=_n_atoms(cfg))
    ctrl_n = t.get("negative_control_N", 0)
    if ctrl_n:
        ctrl = verify_sethuraman(man, None, ctrl_n, rng,
                                 r_beta=man.beta + 1.0,
                                 n_atoms=_n_atoms(cfg))
        rep.checks.extend(c for c in ctrl.checks
                          if "negative control" in c.name)
        rep.meta["negative_control_max_z"] = ctrl.meta["max_moment_z"]
    return rep


def _run_ibp(cfg, man, rng, artifacts):
    N = cfg["tasks"]["verify-ibp"]["N"]
    cyls = [_cyl(d, man) for d in cfg["baskets"]["cylinder_functions"]]
    fields = [_field(f, man) for f in cfg["baskets"]["vector_fields"]]
    out = verify_ibp_basket(cyls, cyls, fields, N, rng, man,
                            n_atoms=_n_atoms(cfg))
    # the v = 1 slice doubles as the drift mean-zero check
    one = CylinderFunction.constant(1.0, man.dim)
    for k, w in enumerate(fields):
        rep = verify_ibp(cyls[0], one, w, N, rng, man,
                         n_atoms=_n_atoms(cfg), label=f"[u0 v=1 w{k}]")
        out.checks.extend(rep.checks)
    return out


def _run_pqi(cfg, man, rng, artifacts):
    t = cfg["tasks"]["verify-pqi"]
    u = _cyl(t["u"], man)
    n = t["n"]
    step = t.get("flow_step", 0.1)
    out = Report("verify-pqi", meta={"N": t["N"], "n": n, "beta": man.beta})
    translation = FlowDiffeo(VectorField.constant(
        t["translation"], man.side), 1.0)
    rep = verify_pqi(translation, u, n, t["N"], rng, man,
                     n_atoms=_n_atoms(cfg), label="[translation]")
    out.checks.extend(rep.checks)
    grad_flow = FlowDiffeo(_field(t["gradient_field"], man), 1.0, step=step)
    rep = verify_pqi(grad_flow, u, n, t["N"], rng, man,
                     n_atoms=_n_atoms(cfg), label="[gradient-flow]")
    out.checks.extend(rep.checks)
    return out


def _run_bmart(cfg, man, rng, artifacts):
    t = cfg["tasks"]["verify-bmart"]
    coarse = WeightProfile((1.0,), eps=t["delta"],
                           delta=min(0.05, t["delta"]))
    basket = [CylinderFunction.single(
        TestFunction(_trig(fd["f"], man), coarse))
        for fd in cfg["baskets"]["test_functions"]]
    field = _field(cfg["baskets"]["vector_fields"][-1], man)
    return verify_B_martingale(field, t["eps"], t["delta"], basket,
                               t["N"], rng, man, n_atoms=_n_atoms(cfg))


def _run_simulate(cfg, man, rng, artifacts):
    t = cfg["tasks"]["simulate"]
    grid = np.arange(0.0, t["t_grid"]["horizon"] + 1e-12,
                     t["t_grid"]["dt"])
    paths = simulate(man, "stationary", grid, t["n_paths"], rng,
                     n_atoms=_n_atoms(cfg))
    artifacts["paths.csv"] = paths_to_csv(paths)
    rep = Report("simulate", meta={"n_paths": t["n_paths"],
                                   "horizon": t["t_grid"]["horizon"],
                                   "beta": man.beta})
    gap = max(float(np.abs(p.weights - p.initial_weights).max())
              for p in paths)
    rep.add(abs_check("simulate weights frozen bitwise", gap, 0.0, 0.0))
    return rep


def _run_martingale(cfg, man, rng, artifacts):
    t = cfg["tasks"]["verify-martingale"]
    u = _cyl(t["u"], man)
    grid = np.arange(0.0, t["horizon"] + 1e-12, t["dt"])
    out = verify_martingale(u, man, grid, t["n_paths"], rng,
                            n_atoms=_n_atoms(cfg),
                            qv_rel_tol=t.get("qv_rel_tol", 0.05))
    rows = ["t,mean_M,se_M,realized_qv,predicted_qv,se_realized_qv"]
    for k in range(len(out.t_grid)):
        rows.append(",".join(repr(float(v)) for v in (
            out.t_grid[k], out.mean_M[k], out.se_M[k],
            out.realized_qv[k], out.predicted_qv[k],
            out.se_realized_qv[k])))
    artifacts["martingale.csv"] = "\n".join(rows) + "\n"
    return out.report


def _run_invariance(cfg, man, rng, artifacts):
    t = cfg["tasks"]["verify-invariance"]
    return verify_invariance(man, None, t["t_list"], t["N"], rng,
                             n_atoms=_n_atoms(cfg))


def _run_ergodic(cfg, man, rng, artifacts):
    t = cfg["tasks"]["verify-ergodic"]
    weights = np.asarray(t["weights"], dtype=float)
    weights = weights / weights.sum()
    return verify_ergodic_component(man, weights, t["t_list"], t["N"], rng)


def _run_energy(cfg, man, rng, artifacts):
    t = cfg["tasks"]["energy"]
    return dirichlet_energy(_cyl(t["u"], man), man, t["N"], rng,
                            n_atoms=_n_atoms(cfg))


def _run_w2(cfg, man, rng, artifacts):
    t = cfg["tasks"]["w2"]
    fix = _fixture(t["fixture"])
    mu = AtomicMeasure.from_json_dict(fix["mu"], man)
    nu = AtomicMeasure.from_json_dict(fix["nu"], man)
    plan = w2_arrays(man, mu.weights.s, mu.locations,
                     nu.weights.s, nu.locations)
    artifacts["plan.csv"] = plan.to_csv()
    rep = Report("w2", meta={"fixture": t["fixture"], "w2": plan.w2})
    rep.add(abs_check("w2 cost vs bundled enumeration value", plan.cost,
                      fix["expected_cost"], fix["tolerance"]))
    mat = plan.matrix()
    rep.add(abs_check("w2 row marginals", float(
        np.abs(mat.sum(axis=1) - mu.weights.s).max()), 0.0, 1e-10))
    rep.add(abs_check("w2 col marginals", float(
        np.abs(mat.sum(axis=0) - nu.weights.s).max()), 0.0, 1e-10))
    return rep


def _run_varadhan(cfg, man, rng, artifacts):
    t = cfg["tasks"]["varadhan"]
    fix = _fixture(t["fixture"])
    ref1 = AtomicMeasure.from_json_dict(fix["ref1"], man)
    ref2 = AtomicMeasure.from_json_dict(fix["ref2"], man)
    rep = varadhan_probe(man, ref1, fix["r1"], ref2, fix["r2"],
                         fix["t_list"], t.get("N", fix["N"]), rng,
                         slack=fix["slack"], n_atoms=_n_atoms(cfg),
                         pilot=fix["pilot"])
    rows = ["t,p_hat,stderr,t_log_p,bound"]
    for r in rep.meta.get("rows", []):
        tl = "" if r["t_log_p"] is None else repr(float(r["t_log_p"]))
        rows.append(f"{float(r['t'])!r},{float(r['p_hat'])!r},"
                    f"{float(r['stderr'])!r},{tl},"
                    f"{float(r['bound'])!r}")
    artifacts["varadhan.csv"] = "\n".join(rows) + "\n"
    return rep


def _run_rademacher(cfg, man, rng, artifacts):
    t = cfg["tasks"]["rademacher"]
    fix = _fixture("w2_fixture.json")
    ref = AtomicMeasure.from_json_dict(fix["mu"], man)
    const = [0.5, 0.2, 0.35, 0.15][:man.dim]
    const += [0.3] * (man.dim - len(const))
    # gentle curvature keeps the O(h) correction inside the (1 + 10h) budget
    mild = VectorField(tuple(
        TrigFunction.from_terms([(0.1, (0,) * j + (1,) +
                                  (0,) * (man.dim - j - 1), "cos"),
                                 (0.5, (0,) * man.dim, "cos")],
                                man.dim, man.side)
        for j in range(man.dim)))
    fields = [VectorField.constant(const, man.side), mild]
    return rademacher_probe(man, ref, fields, t["N"], rng, h=t["h"],
                            tol_factor=t.get("tol_factor", 10.0),
                            n_atoms=_n_atoms(cfg))


_RUNNERS = {
    "sample-df": _run_sample_df,
    "verify-mecke": _run_mecke,
    "verify-sethuraman": _run_sethuraman,
    "verify-ibp": _run_ibp,
    "verify-pqi": _run_pqi,
    "verify-bmart": _run_bmart,
    "simulate": _run_simulate,
    "verify-martingale": _run_martingale,
    "verify-invariance": _run_invariance,
    "verify-ergodic": _run_ergodic,
    "energy": _run_energy,
    "w2": _run_w2,
    "varadhan": _run_varadhan,
    "rademacher": _run_rademacher,
}


def run(subcommand: str, cfg: dict, write: bool = True) -> Report:
    """Execute one subcommand; returns its Report and writes artifacts
    (report JSON, resolved config, task CSVs) under cfg['out_dir']."""
    if subcommand not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    man = _manifold(cfg)
    rng = _rng_for(cfg, subcommand)
    reports_mod.DEFAULT_SIGMAS = cfg.get("tolerance_sigmas", 3.0)
    artifacts: dict = {}
    report = _RUNNERS[subcommand](cfg, man, rng, artifacts)
    report.meta["config_hash"] = config_hash(cfg)
    report.meta["seed"] = cfg["seed"]
    if write:
        out = Path(cfg["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{subcommand}.json").write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
        (out / "resolved_config.json").write_text(
            json.dumps(cfg, sort_keys=True, indent=1) + "\n")
        for name in sorted(artifacts):
            (out / name).write_text(artifacts[name])
    return report


def run_all(cfg: dict, workers: int = 1) -> list:
    """Run every subcommand.  Task seeds are fixed per subcommand and each
    task writes its own distinct files, so the resulting bytes do not
    depend on the worker count."""
    if workers <= 1:
        return [run(sub, cfg) for sub in SUBCOMMANDS]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, sub, cfg, True)
                   for sub in SUBCOMMANDS]
        return [f.result() for f in futures]
