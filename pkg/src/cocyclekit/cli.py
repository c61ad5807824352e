"""Command line drivers.

Every command writes its artifacts into ``--out`` together with a
``manifest.json``.  Settings come from a flat ``key = value`` file given by
``--config`` and from flags; flags win.  Failures are reported as
``error.json`` and mapped to exit codes by error category.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import cocycle as cc
from . import covering as cv
from . import domination as dm
from . import io
from . import matkernel as mk
from . import orbit as ob
from . import perturb as pt
from . import symbolic as sy
from .errors import EXIT_CODES, ArtifactError, CertificateFailed, ContractViolation, FormatError

log = logging.getLogger("cocyclekit")

DEFAULTS = {
    "seed": 0,
    "dim": 2,
    "alphabet": 2,
    "depth": 1,
    "epsilon": 0.5,
    "delta": None,
    "rho": None,
    "horizon": 12,
    "steps": 1000,
    "out": "out",
    "samples": 20,
    "fill": 0.5,
    "r": 1.1,
    "index": 1,
    "example": None,
    "input": None,
    "start": None,
    "periods": None,
    "target_scale": 0.3,
    "tuples": 1000,
    "audit_points": 10_000,
    "mesh_cap": cv.DEFAULT_MESH_CAP,
    "tol": None,
}

_TYPES = {
    "seed": int, "dim": int, "alphabet": int, "depth": int, "horizon": int, "steps": int,
    "samples": int, "index": int, "tuples": int, "audit_points": int, "mesh_cap": int,
    "epsilon": float, "delta": float, "rho": float, "fill": float, "r": float,
    "target_scale": float, "tol": float,
}


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise FormatError(f"{path}:{n}: unknown key {key!r}")
        out[key] = val
    return out


def _coerce(key, val):
    if val is None:
        return None
    conv = _TYPES.get(key)
    try:
        return conv(val) if conv else val
    except ValueError:
        raise FormatError(f"bad value for {key}: {val!r}") from None


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return {k: _coerce(k, v) for k, v in cfg.items()}


# ---------------------------------------------------------------------------
# helpers


class Run:
    def __init__(self, command: str, cfg: dict, inputs=()):
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.manifest = io.Manifest(command, cfg, inputs, cfg["seed"])
        self.summary: dict = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.manifest.outputs.append(name)
        return p

    def json(self, name: str, obj) -> None:
        io.write_json(self.path(name), obj)

    def csv(self, name: str, header, rows, plot: tuple[str, list[str]] | None = None) -> None:
        io.write_csv(self.path(name), header, rows)
        if plot:
            x, ys = plot
            io.atomic_write_text(self.path(f"plot_{Path(name).stem}.py"), plot_script(name, x, ys))

    def finish(self) -> None:
        self.manifest.lap("total")
        d = self.manifest.as_dict()
        d["summary"] = self.summary
        io.write_json(self.out / "manifest.json", d)


def plot_script(csv_name: str, x: str, ys: list[str]) -> str:
    cols = ", ".join(repr(y) for y in ys)
    return (
        "import csv\n"
        "import matplotlib.pyplot as plt\n\n"
        f"with open({csv_name!r}) as fh:\n"
        "    rows = list(csv.DictReader(fh))\n"
        f"xs = [float(r[{x!r}]) for r in rows]\n"
        f"for col in [{cols}]:\n"
        "    plt.plot(xs, [float(r[col]) for r in rows], label=col)\n"
        f"plt.xlabel({x!r})\n"
        "plt.legend()\n"
        f"plt.savefig({Path(csv_name).stem + '.png'!r}, dpi=120)\n"
    )


def _need(cfg, key):
    if cfg.get(key) is None:
        raise ContractViolation(f"--{key.replace('_', '-')} is required for this command")
    return cfg[key]


def _parse_periods(text: str | None, m: int) -> list[tuple]:
    if not text:
        return [(i,) for i in range(1, m + 1)]
    out = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            out.append(tuple(int(c) for c in part.split(",")))
    return out


def _example(name: str, cfg) -> cc.LocallyConstantCocycle:
    m, d = cfg["alphabet"], cfg["dim"]
    sft = sy.SFT.full(m)
    if name == "diag":
        return cc.LocallyConstantCocycle.constant(sft, np.diag([2.0, 0.5]))
    if name == "identity":
        return cc.LocallyConstantCocycle.identity(sft, d)
    if name == "rotation":
        c, s = math.cos(1.0), math.sin(1.0)
        R = np.eye(d)
        R[:2, :2] = [[c, -s], [s, c]]
        return cc.LocallyConstantCocycle.constant(sft, R)
    if name == "fig2":
        H = np.diag([2.0, 0.5])
        return dm.example_fig2(H, H)
    if name == "random":
        return cc.random_cocycle(np.random.default_rng(cfg["seed"]), sft, d, cfg["depth"], 0.5)
    raise ContractViolation(f"unknown example {name!r}", choices=["diag", "identity", "rotation", "fig2", "random"])


def _cocycle_input(cfg) -> cc.LocallyConstantCocycle:
    if cfg["input"]:
        return cc.LocallyConstantCocycle.load(cfg["input"])
    if cfg["example"]:
        return _example(cfg["example"], cfg)
    raise ContractViolation("give --input FILE or --example NAME")


def _build_cfg(cfg) -> cv.SearchConfig:
    return cv.SearchConfig(seed=cfg["seed"], audit_points=cfg["audit_points"], mesh_cap=cfg["mesh_cap"])


def _load_pipeline_dir(path) -> tuple[cc.LocallyConstantCocycle, cv.CocycleCoveringCertificate]:
    """Cocycle plus certificate, re-verified from the stored region, words and margins."""
    root = Path(path)
    A = cc.LocallyConstantCocycle.load(root / "cocycle.txt")
    data = io.read_json(root / "certificate.json")
    region = cv.Region.from_dict(data["region"])
    lam = {tuple(int(c) for c in k.split(",")): [tuple(w) for w in ws] for k, ws in data["lambda"].items()}
    marked = [tuple(a) for a in data["marked_words"]]
    per = data["per_word"]
    check = min(float(v["check_delta"]) for v in per.values())
    cert = cv.verify_cocycle_covering(A, region, marked, lam, check, float(data["rho"]))
    if not isinstance(cert, cv.CocycleCoveringCertificate):
        raise CertificateFailed("stored cocycle certificate does not re-verify", **cert.as_dict())
    return A, cert


# ---------------------------------------------------------------------------
# commands


def cmd_covering_build(run: Run) -> None:
    cfg = run.cfg
    res = cv.build_sl_covering_family(cfg["dim"], cfg["epsilon"], _build_cfg(cfg))
    out = res.as_dict()
    if res.certificate is not None:
        out["certificate"] = res.certificate.as_dict()
    run.json("family.json", out)
    run.csv("family.csv", ["index"] + [f"m{i}{j}" for i in range(cfg["dim"]) for j in range(cfg["dim"])],
            [[i] + mk.matrix_to_list(D) for i, D in enumerate(res.family)])
    if cfg["delta"] is not None and cfg["rho"] is not None:
        # user-chosen margins checked on top of the automatic ones
        chk = cv.verify_family_covering(res.family, res.region, cfg["delta"], cfg["rho"], cap=cfg["mesh_cap"])
        out["requested_check"] = chk.as_dict()
        run.json("family.json", out)
    run.summary = {
        "family_size": len(res.family),
        "certified": res.certified,
        "delta": res.certificate.delta if res.certificate is not None else None,
        "audit_failures": res.audit.failures,
        "audit_min_margin": res.audit.min_margin,
    }


def cmd_covering_verify(run: Run) -> None:
    """Re-check a family.json: the mesh certificate when present, else the audit."""
    cfg = run.cfg
    data = io.read_json(_need(cfg, "input"))
    region = cv.Region.from_dict(data["region"])
    fam = [mk.matrix_from_list(v, region.dim) for v in data["family"]]
    audit = cv.audit_covering(fam, region, cfg["audit_points"], seed=cfg["seed"] + 1)
    run.summary = {"audit_failures": audit.failures, "audit_min_margin": audit.min_margin}
    if "certificate" in data:
        cert = cv.certificate_from_dict(data["certificate"])
        ok = cv.recheck_certificate(cert)
        run.summary.update({"certificate_ok": ok, "delta": cert.delta})
        if not ok:
            raise CertificateFailed("certificate does not re-check")
    if audit.failures:
        raise CertificateFailed("audit found uncovered points", failures=audit.failures)


def _trace_rows(plan: ob.OrbitPlan, B: cc.LocallyConstantCocycle) -> list[list]:
    x = plan.point()
    prods = B.products_along(x, plan.steps)
    norms = mk.batch_norm(prods)
    inv = mk.batch_norm(np.linalg.inv(prods))
    marks = set(plan.times)
    rows = []
    for n in range(len(prods)):
        inside = int(plan.region.contains(prods[n])) if n in marks else ""
        rows.append([n, math.log(norms[n]), math.log(inv[n]), norms[n] * inv[n], inside])
    return rows


TRACE_HEADER = ["n", "log_norm", "log_norm_inv", "qc_ratio", "in_U"]


def cmd_orbit_build(run: Run) -> None:
    cfg = run.cfg
    A, cert = _load_pipeline_dir(_need(cfg, "input"))
    budget = ob.epsilon_budget(cert, A)
    rng = np.random.default_rng(cfg["seed"])
    if cfg["fill"] > 0:
        B = pt.random_holder_perturbation(A, cfg["fill"] * budget.epsilon, rng, depth=A.depth + 1)
    else:
        B = A
    L = cert.max_transition_length
    starts = [cfg["start"]] if cfg["start"] else [",".join(map(str, a)) for a in cert.marked_words]
    per_start, plan = [], None
    for s in starts:
        a0 = tuple(int(c) for c in str(s).split(","))
        p = ob.build_bounded_orbit(cert, A, B, cfg["steps"], start=a0)
        chk = ob.verify_orbit_plan(p, B)
        rep = ob.two_sided_bound(p, B, L)
        per_start.append({"start": list(a0), "check": chk.as_dict(), "bound": rep.as_dict()})
        plan = plan or p
    run.json("plan.json", plan.as_dict())
    run.json("bounds.json", per_start)
    run.csv("trace.csv", TRACE_HEADER, _trace_rows(plan, B), plot=("n", ["log_norm", "log_norm_inv"]))
    run.summary = {
        "epsilon_budget": budget.epsilon,
        "holder_distance": cc.holder_distance(A, B),
        "per_start_forward_max": {",".join(map(str, r["start"])): r["bound"]["forward_max"] for r in per_start},
        "all_ok": all(r["check"]["ok"] and r["bound"]["forward_ok"] and r["bound"]["period_ok"] for r in per_start),
    }


def cmd_orbit_oracle(run: Run) -> None:
    cfg = run.cfg
    A, cert = _load_pipeline_dir(_need(cfg, "input"))
    word, value = ob.brute_force_min_max_norm(A, cfg["horizon"])
    K = max(A.norm, A.norm_inv) ** cert.max_transition_length * cert.region.norm_bound()
    run.json("oracle.json", {"word": list(word), "value": value, "K": K, "horizon": cfg["horizon"]})
    run.summary = {"value": value, "K": K, "dominated_by_K": value <= K}


def cmd_orbit_attack(run: Run) -> None:
    cfg = run.cfg
    rng = np.random.default_rng(cfg["seed"])
    sft = sy.SFT.full(cfg["alphabet"])
    if cfg["input"] or cfg["example"]:
        B = _cocycle_input(cfg)
    else:
        B = cc.random_cocycle(rng, sft, cfg["dim"], cfg["depth"], 0.3)
    n = cfg["steps"]
    core = sy.Word(tuple(int(c) for c in rng.integers(1, B.sft.m + 1, size=n + 10)))
    x0 = sy.point_through(B.sft, core)
    res = ob.unbounded_attack(B, x0, cfg["r"], n)
    run.csv("attack.csv", ["i", "norm_B", "norm_B_hat", "lower_bound"], res.rows,
            plot=("i", ["norm_B", "norm_B_hat", "lower_bound"]))
    run.json("attack.json", res.as_dict())
    run.summary = {"ratio": res.ratio, "measured": res.measured, "bound": res.bound,
                   "multiplicative_size": res.multiplicative_size, "stretch_size": res.stretch_size}


def cmd_domination_scan(run: Run) -> None:
    cfg = run.cfg
    A = _cocycle_input(cfg)
    rep = dm.domination_scan(A, cfg["index"], cfg["horizon"])
    run.json("domination.json", rep.as_dict())
    run.csv("domination.csv", ["m", "worst_ratio"], sorted(rep.worst_ratio.items()), plot=("m", ["worst_ratio"]))
    run.summary = {"m_found": rep.m_found, "summary": rep.summary()}


def cmd_spectrum_scan(run: Run) -> None:
    cfg = run.cfg
    A = _cocycle_input(cfg)
    rep = dm.periodic_spectrum_scan(A, cfg["horizon"], cfg["tol"])
    run.csv("spectrum.csv", rep.header(A.dim), [e.row() for e in rep.entries])
    run.summary = {"words": len(rep.entries), "all_hyperbolic": rep.all_hyperbolic,
                   "hyperbolic": rep.count(lambda e: e.hyperbolic)}


def cmd_census(run: Run) -> None:
    cfg = run.cfg
    sampler = dm.gaussian_tuple_sampler(cfg["dim"], cfg["alphabet"])
    rep = dm.hyperbolicity_census(sampler, cfg["tuples"], cfg["horizon"], cfg["dim"], seed=cfg["seed"])
    run.json("census.json", rep.as_dict())
    run.summary = {"witness_fraction": rep.witness_fraction, "spectral_fraction": rep.spectral_fraction}


def cmd_perturb_realize(run: Run) -> None:
    cfg = run.cfg
    rng = np.random.default_rng(cfg["seed"])
    m, d = cfg["alphabet"], cfg["dim"]
    sft = sy.SFT.full(m)
    periods = _parse_periods(cfg["periods"], m)
    if cfg["input"]:
        A = cc.LocallyConstantCocycle.load(cfg["input"])
    else:
        A = pt.identity_periodic_cocycle(sft, d, cfg["depth"], periods, rng, 0.1)
    targets = [mk.random_sl(rng, d, cfg["target_scale"]) for _ in range(len(periods) - 1)]
    if all(len(p) == 1 for p in periods):
        res = pt.realize_transitions_fixed(A, targets, cfg["epsilon"])
    else:
        res = pt.realize_transitions_periodic(A, periods, targets, cfg["epsilon"])
    res.cocycle.save(run.path("cocycle.txt"))
    run.json("realization.json", res.as_dict())
    run.summary = {"depth": res.depth, "n0": res.n0, "distance": res.distance, "max_residual": res.max_residual}


def cmd_pipeline_dichotomy(run: Run) -> None:
    """Identity fixed points -> covering cocycle -> budget -> perturbed bounded orbits."""
    cfg = run.cfg
    m, d = cfg["alphabet"], cfg["dim"]
    A = cc.LocallyConstantCocycle.identity(sy.SFT.full(m), d)
    cov = pt.make_covering_cocycle(A, cfg["epsilon"], cfg=_build_cfg(cfg))
    run.manifest.lap("covering")
    cov.cocycle.save(run.path("cocycle.txt"))
    run.json("certificate.json", cov.certificate.as_dict(with_witnesses=False))
    budget = ob.epsilon_budget(cov.certificate, cov.cocycle)
    run.json("budget.json", budget.as_dict())
    L = cov.certificate.max_transition_length
    rows, first = [], None
    for s in range(cfg["samples"]):
        rng = np.random.default_rng([cfg["seed"], s])
        B = pt.random_holder_perturbation(cov.cocycle, cfg["fill"] * budget.epsilon, rng,
                                          depth=cov.cocycle.depth + 1)
        hd = cc.holder_distance(cov.cocycle, B)
        try:
            plan = ob.build_bounded_orbit(cov.certificate, cov.cocycle, B, cfg["steps"])
            chk = ob.verify_orbit_plan(plan, B)
            rep = ob.two_sided_bound(plan, B, L)
        except ArtifactError as exc:
            rows.append([s, hd, 0, "", "", "", type(exc).__name__])
            continue
        ok = chk.ok and rep.forward_ok and rep.period_ok
        rows.append([s, hd, int(ok), chk.min_depth_step, rep.forward_max, rep.period_max, ""])
        first = first or (plan, B)
    run.manifest.lap("orbits")
    run.csv("perturbations.csv", ["sample", "holder_distance", "ok", "min_depth", "forward_max", "period_max",
                                  "error"], rows)
    if first:
        run.csv("trace.csv", TRACE_HEADER, _trace_rows(*first), plot=("n", ["log_norm", "log_norm_inv"]))
    good = sum(r[2] for r in rows)
    run.summary = {
        "certificate_delta": cov.certificate.delta,
        "c0_distance": cov.realization.distance,
        "epsilon_budget": budget.epsilon,
        "successes": f"{good}/{len(rows)}",
    }
    if good < len(rows):
        raise CertificateFailed("some perturbations did not yield verified orbits", successes=good,
                                   samples=len(rows))


HELP = {
    "covering_build": "search and certify a covering family near Id",
    "covering_verify": "re-check a family.json from covering_build",
    "orbit_build": "bounded orbit for a perturbation of a pipeline cocycle",
    "orbit_oracle": "brute-force min-max norm over words of a horizon",
    "orbit_attack": "orbit-segment perturbation with growing products",
    "domination_scan": "finite-time singular value gap scan",
    "spectrum_scan": "eigenvalue scan over primitive periodic words",
    "census": "hyperbolicity census of random tuples",
    "perturb_realize": "realize random targets as transition products",
    "pipeline_dichotomy": "covering cocycle, budget and perturbed orbits end to end",
}

COMMANDS = {
    "covering_build": cmd_covering_build,
    "covering_verify": cmd_covering_verify,
    "orbit_build": cmd_orbit_build,
    "orbit_oracle": cmd_orbit_oracle,
    "orbit_attack": cmd_orbit_attack,
    "domination_scan": cmd_domination_scan,
    "spectrum_scan": cmd_spectrum_scan,
    "census": cmd_census,
    "perturb_realize": cmd_perturb_realize,
    "pipeline_dichotomy": cmd_pipeline_dichotomy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--alphabet", type=int, help="number of letters of the full shift")
    common.add_argument("--depth", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--rho", type=float)
    common.add_argument("--horizon", type=int)
    common.add_argument("--steps", type=int)
    common.add_argument("--out")
    common.add_argument("--input")
    common.add_argument("--example", help="diag, identity, rotation, fig2 or random")
    common.add_argument("--samples", type=int)
    common.add_argument("--fill", type=float, help="perturbation radius as a share of the budget")
    common.add_argument("--r", type=float, help="stretch factor of the attack")
    common.add_argument("--index", type=int)
    common.add_argument("--start", help="starting marked word, comma separated")
    common.add_argument("--periods", help="period words, e.g. '1;2,3'")
    common.add_argument("--target-scale", dest="target_scale", type=float)
    common.add_argument("--tuples", type=int)
    common.add_argument("--audit-points", dest="audit_points", type=int)
    common.add_argument("--mesh-cap", dest="mesh_cap", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="cocyclekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve(args)
    except ArtifactError as exc:
        print(io.dumps(exc.report()), file=sys.stderr, end="")
        return EXIT_CODES[exc.category]
    run = Run(args.command, cfg, [p for p in (cfg["input"], args.config) if p])
    code = 0
    try:
        COMMANDS[args.command](run)
    except ArtifactError as exc:
        run.manifest.status = "error"
        run.manifest.error = exc.report()
        io.write_json(run.out / "error.json", exc.report())
        print(io.dumps(exc.report()), file=sys.stderr, end="")
        code = EXIT_CODES[exc.category]
    except OSError as exc:
        run.manifest.status = "error"
        run.manifest.error = {"error": type(exc).__name__, "category": "io", "message": str(exc)}
        print(io.dumps(run.manifest.error), file=sys.stderr, end="")
        code = EXIT_CODES["io"]
    run.finish()
    if code == 0:
        log.info(io.dumps(run.summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
