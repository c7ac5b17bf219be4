"""Declarative experiment runner.

A config is a JSON document naming a domain, a norm, exponents, fixtures, a
quadrature budget, and a list of checks from a closed enumeration. ``run``
executes the checks in declaration order (a failing check does not abort the
run), evaluates each declared assertion against the reported error budgets,
and writes the report atomically. ``suite paper`` runs the built-in
verification matrix. Reruns with the same config are byte-identical: every
sampled quantity is seeded from the config, and wall time is printed rather
than serialized.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bblcheck as bbl
from . import extgrid as eg
from . import fields as fl
from . import hopflax as hl
from . import sharpconst as sc
from .quadrature import QuadSpec
from .transforms import NormSpec, norm_from_config

CHECK_NAMES = (
    "bbl_gap",
    "derived_gap",
    "appendix_limit",
    "semigroup",
    "hj_quotient",
    "trace_gn",
    "weighted_trace",
    "constants",
    "admissibility",
    "equivalence_scan",
)

_DEFAULT_TOLERANCES = {
    "trace_ratio": 0.02,
    "b_routes": 0.01,
    "identity": 1e-12,
    "derivative_rel": 0.05,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    n: int
    domain: eg.EpigraphDomain
    norm: NormSpec
    a: float
    p: float | None
    h_list: list[float]
    eps_list: list[float]
    fixture: dict
    checks: list[str]
    quad: QuadSpec
    grid_half_width: float
    grid_dx: float
    seed: int
    tolerances: dict
    expect_rejection: bool = False
    raw: dict = field(default_factory=dict)


def parse_config(doc: dict, name: str = "config") -> ExperimentConfig:
    """Validate a config document; unknown check names are rejected with
    their position, so typos surface before any computation starts."""
    checks = doc.get("checks", [])
    for i, c in enumerate(checks):
        if c not in CHECK_NAMES:
            raise ConfigError(
                f"{name}: checks[{i}]: unknown check {c!r}; "
                f"valid names: {', '.join(CHECK_NAMES)}"
            )
    n = int(doc.get("n", 2))
    try:
        domain = eg.domain_from_config(doc.get("domain", {"kind": "halfspace"}), n)
    except (KeyError, ValueError) as ex:
        raise ConfigError(f"{name}: domain: {ex}") from ex
    try:
        norm = norm_from_config(doc.get("norm", {"kind": "euclidean"}))
    except (KeyError, ValueError) as ex:
        raise ConfigError(f"{name}: norm: {ex}") from ex
    params = doc.get("params", {})
    quad = doc.get("quadrature", {})
    tol = dict(_DEFAULT_TOLERANCES)
    tol.update(doc.get("tolerances", {}))
    return ExperimentConfig(
        name=name,
        n=n,
        domain=domain,
        norm=norm,
        a=float(params.get("a", n)),
        p=(float(params["p"]) if "p" in params else None),
        h_list=[float(h) for h in params.get("h_list", [0.25, 0.5])],
        eps_list=[float(e) for e in params.get("eps_list", [0.1, 0.05, 0.01])],
        fixture=doc.get("fixture", {"kind": "extremal"}),
        checks=list(checks),
        quad=QuadSpec(
            half_width=float(quad.get("half_width", 5.0)),
            dx=float(quad.get("dx", 0.05)),
            levels=int(quad.get("levels", 6)),
        ),
        grid_half_width=float(quad.get("grid_half_width", 8.0)),
        grid_dx=float(quad.get("grid_dx", 0.1)),
        seed=int(doc.get("seed", 0)),
        tolerances=tol,
        expect_rejection=bool(doc.get("expect_rejection", False)),
        raw=doc,
    )


def _bbl_params(cfg: ExperimentConfig, h: float = 0.0) -> bbl.BBLParams:
    return bbl.BBLParams(n=cfg.n, a=cfg.a, p=cfg.p, h=h)


def _result(status: str, assertions=None, **data):
    out = {"status": status, "assertions": assertions or []}
    out.update(data)
    return out


def _assert(assertions: list, label: str, ok: bool, detail: str = ""):
    assertions.append({"label": label, "passed": bool(ok), "detail": detail})
    return ok


def _power_pair(cfg: ExperimentConfig):
    q = cfg.p / (cfg.p - 1.0)
    C = sc.normalize_power_cost(cfg.domain, cfg.norm, q, cfg.a, cfg.quad)
    W = fl.power_cost_field(C, q, cfg.norm)
    e = np.zeros(cfg.n)
    e[-1] = 1.0
    g = fl.shifted_field(W, e)
    return g, W, q


def _grid_pair(cfg: ExperimentConfig):
    g, W, q = _power_pair(cfg)
    L, dx = cfg.grid_half_width, cfg.grid_dx
    m1 = int(round(2 * L / dx)) + 1
    m2 = int(round(L / dx)) + 1
    boxg = [(-L, L)] * (cfg.n - 1) + [(0.0, L)]
    boxW = [(-L, L)] * (cfg.n - 1) + [(1.0, 1.0 + L)]
    res = [m1] * (cfg.n - 1) + [m2]
    gg = eg.sample_grid(cfg.domain, boxg, res, g, h=0.0)
    WW = eg.sample_grid(cfg.domain, boxW, res, W, h=1.0)
    return gg, WW


def _fixture_field(cfg: ExperimentConfig):
    kind = cfg.fixture.get("kind", "extremal")
    if kind == "extremal":
        return sc.extremal_f(_bbl_params(cfg), cfg.norm).field()
    if kind == "bump":
        return fl.bump_field(
            cfg.fixture.get("center", [0.0] * (cfg.n - 1) + [0.8]),
            radius=float(cfg.fixture.get("radius", 1.0)),
            amplitude=float(cfg.fixture.get("amplitude", 1.0)),
        )
    if kind == "grid_file":
        grid = eg.read_gridfn(cfg.fixture["path"])
        return grid
    raise ConfigError(f"unknown fixture kind {kind!r}")


def check_constants(cfg: ExperimentConfig):
    params = _bbl_params(cfg)
    cst = sc.gns_constants(params, cfg.domain, cfg.norm, cfg.quad)
    a = []
    t = cfg.tolerances
    _assert(a, "uv_conjugate", abs(1 / cst.u + 1 / cst.v - 1) <= t["identity"])
    _assert(
        a, "D_formula",
        abs(cst.D - cst.A**cst.u / ((cst.B * cst.v) ** (cst.u - 1) * cst.u))
        <= t["identity"] * max(1.0, cst.D),
    )
    theta_ref = (cst.a - cst.p) / (cst.p * (cst.a - cst.n - 1) + cst.n)
    _assert(a, "theta_formula", abs(cst.theta - theta_ref) <= t["identity"])
    _assert(
        a, "B_routes",
        abs(cst.B - cst.B_identity) <= t["b_routes"] * abs(cst.B),
        f"direct {cst.B:.6g} vs identity {cst.B_identity:.6g}",
    )
    if cst.a == cst.n:
        _assert(a, "theta_is_one_at_a_eq_n", cst.theta == 1.0)
        _assert(a, "D_npa_equals_D_at_a_eq_n", cst.D_npa == cst.D)
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(status, a, constants=cst.to_json())


def check_trace_gn(cfg: ExperimentConfig):
    params = _bbl_params(cfg)
    a = []
    f = _fixture_field(cfg)
    rep = sc.trace_gn_check(f, params, cfg.domain, cfg.norm, cfg.quad)
    if cfg.fixture.get("kind", "extremal") == "extremal":
        _assert(
            a, "extremal_ratio_one",
            abs(rep.ratio - 1.0) <= cfg.tolerances["trace_ratio"],
            f"ratio {rep.ratio:.5f}",
        )
    else:
        _assert(
            a, "ratio_below_one",
            rep.ratio <= 1.0 + rep.quadrature_error,
            f"ratio {rep.ratio:.5f}",
        )
    refinement = []
    spec = cfg.quad
    for _ in range(int(cfg.raw.get("quadrature", {}).get("refinements", 0))):
        spec = spec.refined()
        r = sc.trace_gn_check(f, params, cfg.domain, cfg.norm, spec)
        refinement.append({"dx": spec.dx, "abs_ratio_minus_one": abs(r.ratio - 1.0)})
    status = "pass" if all(x["passed"] for x in a) else "fail"
    out = _result(
        status, a, report=rep.to_json(),
        params={"n": cfg.n, "a": cfg.a, "p": cfg.p},
        domain=cfg.domain.kind,
    )
    if refinement:
        out["refinement_curve"] = [
            {"dx": cfg.quad.dx, "abs_ratio_minus_one": abs(rep.ratio - 1.0)}
        ] + refinement
    return out


def check_weighted_trace(cfg: ExperimentConfig):
    params = _bbl_params(cfg)
    a = []
    try:
        rep = sc.weighted_trace_check(
            _fixture_field(cfg), params, cfg.domain, cfg.norm, cfg.quad
        )
    except sc.DomainRejectionError as ex:
        ok = cfg.expect_rejection
        _assert(a, "growth_gate", ok, f"rejected: fitted {ex.fitted:.4f} at {ex.witness}")
        return _result("pass" if ok else "fail", a, rejected=True, fitted=ex.fitted)
    if cfg.expect_rejection:
        _assert(a, "growth_gate", False, "expected a rejection but the gate passed")
        return _result("fail", a, rejected=False)
    if cfg.fixture.get("kind", "extremal") == "extremal":
        _assert(
            a, "extremal_ratio_one",
            abs(rep.ratio - 1.0) <= cfg.tolerances["trace_ratio"],
            f"ratio {rep.ratio:.5f}",
        )
    else:
        _assert(
            a, "ratio_below_one",
            rep.ratio <= 1.0 + rep.quadrature_error,
            f"ratio {rep.ratio:.5f}",
        )
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(
        status, a, report=rep.to_json(),
        params={"n": cfg.n, "a": cfg.a, "p": cfg.p},
        domain=cfg.domain.kind,
    )


def check_bbl_gap(cfg: ExperimentConfig):
    gg, WW = _grid_pair(cfg)
    a = []
    curve = []
    for h in cfg.h_list:
        rep = bbl.bbl_gap(gg, WW, _bbl_params(cfg, h))
        curve.append({"h": h, "gap": rep.gap, "error": rep.quadrature_error_estimate})
        _assert(
            a, f"gap_nonnegative_h_{h:g}",
            rep.gap >= -rep.quadrature_error_estimate,
            f"gap {rep.gap:.5f} err {rep.quadrature_error_estimate:.5f}",
        )
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(status, a, gap_curve=curve)


def check_derived_gap(cfg: ExperimentConfig):
    g, W, q = _power_pair(cfg)
    rep = bbl.derived_gap(g, W, _bbl_params(cfg), cfg.domain, cfg.quad)
    a = []
    _assert(
        a, "derived_gap_nonnegative",
        rep.gap >= -rep.quadrature_error_estimate,
        f"gap {rep.gap:.5f} err {rep.quadrature_error_estimate:.5f}",
    )
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(status, a, report=rep.to_json())


def check_appendix_limit(cfg: ExperimentConfig):
    g, W, q = _power_pair(cfg)
    qspec = QuadSpec(
        half_width=min(cfg.quad.half_width, 4.0), dx=max(cfg.quad.dx, 0.1),
        levels=min(cfg.quad.levels, 5),
    )
    recs = bbl.appendix_limit_residual(
        g, W, _bbl_params(cfg), cfg.domain, cfg.h_list, cfg.quad, quotient_spec=qspec
    )
    a = []
    res = [abs(r["residual"]) for r in recs]
    hs = [r["h"] for r in recs]
    order = np.argsort(hs)[::-1]
    seq = [res[i] for i in order]
    _assert(
        a, "residual_shrinks",
        seq[-1] <= seq[0],
        f"|residual| {seq[0]:.4f} at h={hs[order[0]]:g} vs {seq[-1]:.4f} at h={hs[order[-1]]:g}",
    )
    if cfg.domain.kind in ("halfspace", "cone", "affine_max"):
        _assert(a, "third_term_zero_on_cones", all(r["term_iii"] == 0.0 for r in recs))
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(status, a, records=recs)


def check_semigroup(cfg: ExperimentConfig):
    quad = fl.quadratic_field(offset=1.0, curvature=1.0)
    L, dx = 2.0, cfg.grid_dx / 2
    m = int(round(2 * L / dx)) + 1
    xs = np.linspace(-L, L, m)
    mesh = np.stack(np.meshgrid(*([xs] * cfg.n), indexing="ij"), axis=-1)
    g = eg.ExtGridFn([(-L, L)] * cfg.n, quad(mesh))
    res = hl.semigroup_residual(g, g, 0.6, 0.2)
    a = []
    _assert(a, "semigroup_residual", res <= 5 * dx, f"residual {res:.5f} vs 5dx {5*dx:.3f}")
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(status, a, residual=res, dx=dx)


def check_hj_quotient(cfg: ExperimentConfig):
    quad = fl.quadratic_field(offset=1.0, curvature=1.0)
    rng = np.random.default_rng(cfg.seed)
    pts = rng.uniform(-0.9, 0.9, size=(8, cfg.n))
    _, limit, ref, dev = hl.hj_difference_quotient(
        quad.fn, quad.grad, quad.fn, quad.conjugate,
        [0.4, 0.2, 0.1, 0.05], pts,
        y_box=[(-3.0, 3.0)] * cfg.n, y_resolution=[25] * cfg.n,
    )
    a = []
    scale = np.maximum(1.0, np.abs(ref))
    worst = float(np.max(dev / scale))
    _assert(a, "hj_limit_matches_conjugate", worst <= 0.01, f"max rel dev {worst:.4f}")
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(status, a, worst_rel_dev=worst)


def check_admissibility(cfg: ExperimentConfig):
    g, W, q = _power_pair(cfg)
    adm = eg.AdmissibilityParams(gamma=q)
    rep = bbl.admissibility_report(g, W, adm, _bbl_params(cfg), cfg.domain)
    a = []
    for cond in rep.conditions:
        _assert(a, f"adm_{cond.name}", cond.passed, f"fitted {cond.fitted:.4g}")
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(
        status, a,
        fitted={c.name: c.fitted for c in rep.conditions},
    )


def check_equivalence_scan(cfg: ExperimentConfig):
    quad = fl.quadratic_field(offset=1.0, curvature=0.5)
    L, dx = 10.0, 0.125
    m = int(round(2 * L / dx)) + 1
    xs = np.linspace(-L, L, m)
    mesh = np.stack(np.meshgrid(*([xs] * cfg.n), indexing="ij"), axis=-1)
    g = eg.ExtGridFn([(-L, L)] * cfg.n, quad(mesh))
    scan = bbl.equivalence_scan(
        g, g, cfg.n, [0.0, 0.05, 0.1, 0.25, 0.5], W_conjugate=quad.conjugate
    )
    a = []
    _assert(a, "phi_at_zero", abs(scan.phi_values[0] - 1.0) <= 1e-10)
    _assert(
        a, "phi_above_one",
        all(p >= 1.0 - scan.error_estimate for p in scan.phi_values),
        f"min phi {min(scan.phi_values):.5f} tol {scan.error_estimate:.5f}",
    )
    dev = abs(scan.fd_derivative - scan.integral_derivative)
    tol = max(
        cfg.tolerances["derivative_rel"] * abs(scan.integral_derivative),
        scan.derivative_error_estimate,
    )
    _assert(a, "derivative_match", dev <= tol, f"fd {scan.fd_derivative:.4f} int {scan.integral_derivative:.4f}")
    status = "pass" if all(x["passed"] for x in a) else "fail"
    return _result(
        status, a,
        phi_curve=[{"h": h, "phi": p, "error": scan.error_estimate} for h, p in scan.curve()],
    )


_CHECK_FNS = {
    "bbl_gap": check_bbl_gap,
    "derived_gap": check_derived_gap,
    "appendix_limit": check_appendix_limit,
    "semigroup": check_semigroup,
    "hj_quotient": check_hj_quotient,
    "trace_gn": check_trace_gn,
    "weighted_trace": check_weighted_trace,
    "constants": check_constants,
    "admissibility": check_admissibility,
    "equivalence_scan": check_equivalence_scan,
}


@dataclass
class RunReport:
    results: list
    wall_time: float
    seed: int

    @property
    def passed(self) -> bool:
        return all(r["result"]["status"] == "pass" for r in self.results)

    def to_json(self) -> dict:
        # wall time stays out of the serialized artifact so reruns are
        # byte-identical; it is printed instead
        return {"seed": self.seed, "results": self.results}


def _run_one(cfg: ExperimentConfig, check: str) -> dict:
    fn = _CHECK_FNS[check]
    try:
        result = fn(cfg)
    except (ValueError, ConfigError) as ex:
        result = _result("error", [], message=str(ex))
    return {"experiment": cfg.name, "check": check, "result": result}


def run_config(cfg: ExperimentConfig) -> list[dict]:
    jobs = [(cfg, c) for c in cfg.checks]
    workers = int(os.environ.get("EPICONV_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda jc: _run_one(*jc), jobs))
    return [_run_one(*jc) for jc in jobs]


def run(config_path: str, report_path: str | None = None) -> RunReport:
    with open(config_path) as fh:
        doc = json.load(fh)
    cfg = parse_config(doc, name=os.path.basename(config_path))
    t0 = time.perf_counter()
    results = run_config(cfg)
    report = RunReport(results, time.perf_counter() - t0, cfg.seed)
    out_path = report_path or doc.get("output", {}).get("report")
    if out_path:
        write_report(report, out_path)
    return report


def write_report(report: RunReport, path: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(report.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def emit_curves(report_path: str, out_dir: str) -> list[str]:
    """One CSV per curve found in a report, deterministic column order."""
    with open(report_path) as fh:
        doc = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def write_csv(name, header, rows):
        path = os.path.join(out_dir, name)
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        os.replace(tmp, path)
        written.append(path)

    for entry in doc.get("results", []):
        tag = f"{entry['experiment']}_{entry['check']}"
        res = entry["result"]
        if "phi_curve" in res:
            write_csv(
                f"{tag}_phi.csv", ["h", "phi", "error"],
                [(r["h"], r["phi"], r["error"]) for r in res["phi_curve"]],
            )
        if "gap_curve" in res:
            write_csv(
                f"{tag}_gap.csv", ["h", "gap", "error"],
                [(r["h"], r["gap"], r["error"]) for r in res["gap_curve"]],
            )
        if "records" in res:
            write_csv(
                f"{tag}_terms.csv",
                ["h", "term_i", "term_ii", "term_iii", "residual"],
                [
                    (r["h"], r["term_i"], r["term_ii"], r["term_iii"], r["residual"])
                    for r in res["records"]
                ],
            )
        if "refinement_curve" in res:
            write_csv(
                f"{tag}_refinement.csv", ["dx", "abs_ratio_minus_one"],
                [(r["dx"], r["abs_ratio_minus_one"]) for r in res["refinement_curve"]],
            )
    return written


def paper_suite_configs() -> list[ExperimentConfig]:
    """The built-in verification matrix at desk scale."""
    docs = [
        (
            "halfspace_p15_a2",
            {
                "seed": 20260808,
                "n": 2,
                "domain": {"kind": "halfspace"},
                "params": {"a": 2.0, "p": 1.5, "h_list": [0.4, 0.2, 0.1, 0.05]},
                "checks": [
                    "constants", "trace_gn", "admissibility",
                    "derived_gap", "appendix_limit",
                ],
                "quadrature": {"half_width": 5.0, "dx": 0.05, "levels": 8},
            },
        ),
        (
            "cone_p15_a25",
            {
                "seed": 20260808,
                "n": 2,
                "domain": {"kind": "cone", "slope": 1.0},
                "params": {"a": 2.5, "p": 1.5},
                "checks": ["constants", "trace_gn"],
                "quadrature": {"half_width": 5.0, "dx": 0.05, "levels": 5},
            },
        ),
        (
            "affinemax_p43_a2",
            {
                "seed": 20260808,
                "n": 2,
                "domain": {"kind": "affine_max", "slopes": [[0.5], [-1.0]]},
                "params": {"a": 2.0, "p": 4 / 3},
                "checks": ["constants", "weighted_trace"],
                "quadrature": {"half_width": 5.0, "dx": 0.05, "levels": 5},
            },
        ),
        (
            "paraboloid_rejection",
            {
                "seed": 20260808,
                "n": 2,
                "domain": {"kind": "paraboloid"},
                "params": {"a": 2.0, "p": 4 / 3},
                "checks": ["weighted_trace"],
                "expect_rejection": True,
                "quadrature": {"half_width": 4.0, "dx": 0.05, "levels": 4},
            },
        ),
        (
            "dynamics_q4_a2",
            {
                "seed": 20260808,
                "n": 2,
                "domain": {"kind": "halfspace"},
                "params": {"a": 2.0, "p": 4 / 3, "h_list": [0.1, 0.25, 0.5, 1.0]},
                "checks": ["bbl_gap", "semigroup", "hj_quotient", "equivalence_scan"],
                "quadrature": {
                    "half_width": 5.0, "dx": 0.05, "levels": 6,
                    "grid_half_width": 8.0, "grid_dx": 0.1,
                },
            },
        ),
    ]
    return [parse_config(doc, name) for name, doc in docs]


def run_suite(report_path: str | None = None) -> RunReport:
    t0 = time.perf_counter()
    results = []
    for cfg in paper_suite_configs():
        results.extend(run_config(cfg))
    report = RunReport(results, time.perf_counter() - t0, 20260808)
    if report_path:
        write_report(report, report_path)
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="epiconv")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config file")
    p_run.add_argument("config")
    p_run.add_argument("--report", default=None, help="report path override")

    p_curves = sub.add_parser("curves", help="emit CSV curves from a report")
    p_curves.add_argument("report")
    p_curves.add_argument("--out", required=True)

    p_suite = sub.add_parser("suite", help="run a built-in suite")
    p_suite.add_argument("name", choices=["paper"])
    p_suite.add_argument("--report", default="epiconv_suite_report.json")

    args = parser.parse_args(argv)
    if args.command == "run":
        try:
            report = run(args.config, args.report)
        except (ConfigError, json.JSONDecodeError, OSError) as ex:
            print(f"error: {ex}", file=sys.stderr)
            return 2
        _print_report(report)
        return 0 if report.passed else 1
    if args.command == "curves":
        written = emit_curves(args.report, args.out)
        for path in written:
            print(path)
        return 0
    if args.command == "suite":
        report = run_suite(args.report)
        _print_report(report)
        print(f"report written to {args.report}")
        return 0 if report.passed else 1
    return 2


def _print_report(report: RunReport) -> None:
    for entry in report.results:
        res = entry["result"]
        print(f"[{res['status']:>5}] {entry['experiment']}::{entry['check']}")
        for item in res.get("assertions", []):
            mark = "ok" if item["passed"] else "FAIL"
            detail = f" ({item['detail']})" if item.get("detail") else ""
            print(f"    {mark:>4} {item['label']}{detail}")
    print(f"wall time: {report.wall_time:.1f} s")


if __name__ == "__main__":
    raise SystemExit(main())
