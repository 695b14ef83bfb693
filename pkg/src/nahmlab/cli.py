"""Configuration-driven pipeline: validate, solve, transform, weights, report.

Exit codes: 0 success, 2 validation failure, 3 no solution found,
4 numerical certification failure.  All reports embed the hash of the
configuration that produced them; identical config and seed give
bit-identical reports (parallel reductions are ordered).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, algebra, dirac, flow, model, monopole, serialize, synthetic, torus
from ._core import backend_name
from .errors import GapError, NahmLabError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_SOLUTION = 3
EXIT_CERTIFICATION = 4


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    lattice: torus.Lattice3
    model_plus: model.ModelSolution
    model_minus: model.ModelSolution
    t_max: float
    grid_n: int
    tol: float
    margin: float
    xi_grid: tuple[int, int, int]
    radii_factor: float
    radii_levels: int
    angle_tol: float
    threads: int
    cache: bool
    seed: int
    raw: dict
    config_hash: str


def load_config(path: str) -> PipelineConfig:
    with open(path) as fh:
        raw = json.load(fh)
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    config_hash = hashlib.sha256(canonical.encode()).hexdigest()[:16]

    rows = np.asarray(raw["lattice"], dtype=float).reshape(3, 3)
    lattice = torus.Lattice3(basis=rows.T)  # config rows are the generators

    plus = serialize.decode_model(raw["model_plus"])
    minus = serialize.decode_model(raw.get("model_minus", raw["model_plus"]))
    if plus.rank != minus.rank:
        raise ValidationError([("model ranks inconsistent", 0.0)])

    solver = raw.get("solver", {})
    t_max = float(solver.get("t_max", flow.DEFAULT_T))
    grid_n = int(solver.get("grid_n", flow.DEFAULT_GRID_N))
    tol = float(solver.get("tol", 1e-8))
    tr = raw.get("transform", {})
    xi_grid = tuple(int(v) for v in tr.get("xi_grid", (9, 9, 9)))
    cfg = PipelineConfig(
        lattice=lattice, model_plus=plus, model_minus=minus,
        t_max=t_max, grid_n=grid_n, tol=tol,
        margin=float(tr.get("margin", 1.0)),
        xi_grid=xi_grid,
        radii_factor=float(tr.get("radii_factor", 0.25)),
        radii_levels=int(tr.get("radii_levels", 5)),
        angle_tol=float(tr.get("angle_tol", dirac.ANGLE_TOL_DEFAULT)),
        threads=int(raw.get("threads", 1)),
        cache=bool(raw.get("cache", True)),
        seed=int(raw.get("seed", 0)),
        raw=raw, config_hash=config_hash,
    )
    bad = []
    if tol <= 0 or cfg.angle_tol <= 0:
        bad.append(("tolerances must be positive", tol))
    if grid_n < 3 or any(v < 3 for v in xi_grid):
        bad.append(("grid sizes must be >= 3", float(grid_n)))
    if t_max <= 0:
        bad.append(("t_max must be positive", t_max))
    if bad:
        raise ValidationError(bad)
    return cfg


class Manifest:
    """Per-run ledger: config hash, versions, stage status and timings."""

    def __init__(self, cfg: PipelineConfig, out_dir: str):
        self.data = {
            "config_hash": cfg.config_hash,
            "versions": {"nahmlab": __version__, "backend": backend_name()},
            "stages": {},
        }
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def stage(self, name: str):
        manifest = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, exc_type, exc, tb):
                manifest.data["stages"][name] = {
                    "status": "ok" if exc_type is None else f"failed: {exc}",
                    "seconds": round(time.perf_counter() - self.t0, 6),
                }
                manifest.write()
                return False

        return _Stage()

    def write(self):
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            fh.write(serialize.dumps(self.data))


def _write_json(out_dir: str, name: str, payload: dict, cfg: PipelineConfig):
    payload = dict(payload)
    payload["manifest"] = cfg.config_hash
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(serialize.dumps(payload))


def _write_csv(out_dir: str, name: str, header: list[str], rows: list[list]):
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(cfg: PipelineConfig, out_dir: str) -> int:
    manifest = Manifest(cfg, out_dir)
    with manifest.stage("validate"):
        try:
            sing = model.singularity_set(cfg.model_plus, cfg.model_minus, cfg.lattice)
        except ValidationError as exc:
            print("VALIDATION FAILED:")
            for name, res in exc.violations:
                print(f"  {name} (residual {res:.3e})")
            _write_json(out_dir, "validation.json",
                        {"status": "failed", "violations": [list(v) for v in exc.violations]}, cfg)
            return EXIT_VALIDATION
        cc = None
        if cfg.lattice.is_split():
            cc = torus.ComplexCoords(lattice=cfg.lattice)
        points = []
        for sp in sing.points:
            entry = {
                "point": [float(x) for x in sp.point.coeffs],
                "mult_plus": sp.plus_mult,
                "mult_minus": sp.minus_mult,
                "w_plus": list(sp.weights_plus().weights),
                "w_minus": list(sp.weights_minus().weights),
            }
            if cc is not None:
                wp, wm = algebra.predict_point_weights(
                    cfg.model_plus, cfg.model_minus, sp.point, cfg.lattice, cc)
                entry["w_plus_stalk_route"] = list(wp.weights)
                entry["w_minus_stalk_route"] = list(wm.weights)
            points.append(entry)
        _write_json(out_dir, "validation.json", {"status": "ok", "singular_points": points}, cfg)
        print(f"valid: rank {cfg.model_plus.rank}, {len(points)} singular point(s)")
        for e in points:
            print(f"  Sing point {e['point']}: w+ = {tuple(e['w_plus'])}, w- = {tuple(e['w_minus'])}")
    return EXIT_OK


def cmd_solve(cfg: PipelineConfig, out_dir: str) -> int:
    manifest = Manifest(cfg, out_dir)
    with manifest.stage("solve"):
        result = flow.solve_heteroclinic(cfg.model_minus, cfg.model_plus,
                                         cfg.t_max, cfg.grid_n, cfg.tol)
        if not result.found:
            _write_json(out_dir, "solve.json", {
                "status": "no-solution",
                "message": result.message,
                "residual_history": list(result.residual_history),
            }, cfg)
            print(f"no solution: {result.message}")
            return EXIT_NO_SOLUTION
        curve = result.curve
        with open(os.path.join(out_dir, "curve.json"), "w") as fh:
            fh.write(serialize.curve_to_text(curve))
        res = flow.asd_residual(curve)
        energy = flow.curvature_energy(curve, cfg.lattice, residual_tol=10 * cfg.tol)
        index = energy / (8.0 * np.pi ** 2)
        fit_p = flow.asymptotic_fit(curve, +1)
        fit_m = flow.asymptotic_fit(curve, -1)
        _write_csv(out_dir, "residual_profile.csv", ["t", "residual"],
                   [[float(t), float(r)] for t, r in zip(curve.grid, res)])
        _write_json(out_dir, "solve.json", {
            "status": "found",
            "max_residual": float(np.max(res)),
            "energy": energy,
            "index_value": index,
            "index_integrality_gap": abs(index - round(index)),
            "asymptotic_fit": {
                "plus": {"center_rate": fit_p.center_rate, "perp_rate": fit_p.perp_rate},
                "minus": {"center_rate": fit_m.center_rate, "perp_rate": fit_m.perp_rate},
            },
        }, cfg)
        print(f"solved: max residual {float(np.max(res)):.3e}, energy {energy:.6e}, "
              f"energy/8pi^2 = {index:.6e}")
    return EXIT_OK


def _xi_grid_points(cfg: PipelineConfig):
    dl = torus.dual_lattice(cfg.lattice)
    nx, ny, nz = cfg.xi_grid
    pts = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                pts.append(torus.reduce([i / nx, j / ny, k / nz], dl))
    return pts


def cmd_transform(cfg: PipelineConfig, out_dir: str, curve_path: str | None,
                  refine: int = 0, threads: int | None = None) -> int:
    manifest = Manifest(cfg, out_dir)
    with manifest.stage("transform"):
        if curve_path is None:
            curve_path = os.path.join(out_dir, "curve.json")
        if not os.path.exists(curve_path):
            print(f"curve file not found: {curve_path}", file=sys.stderr)
            return EXIT_VALIDATION
        with open(curve_path) as fh:
            curve = serialize.curve_from_text(fh.read())
        cm = dirac.default_clifford()
        cache = dirac.KernelCache(os.path.join(out_dir, "kernel_cache")) if cfg.cache else None
        sing = model.singularity_set(curve.plus, curve.minus, cfg.lattice)
        pts = _xi_grid_points(cfg)
        n_threads = threads or cfg.threads

        def work(xi):
            try:
                tk = dirac.total_kernel(curve, xi, cm, margin=cfg.margin,
                                        angle_tol=cfg.angle_tol,
                                        extra_shells=refine, cache=cache)
            except GapError:
                return ("singular", xi, None)
            sample = monopole.higgs_field(tk)
            return ("ok", xi, (tk, sample))

        if n_threads > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=n_threads) as pool:
                results = list(pool.map(work, pts))
        else:
            results = [work(xi) for xi in pts]

        rows = []
        warn_rows = []
        weitz_fail = 0
        for status, xi, payload in results:
            c = [float(x) for x in xi.coeffs]
            if status == "singular":
                warn_rows.append(c + ["singular-point"])
                continue
            tk, sample = payload
            evs = sample.eigenvalues()
            rows.append(c + [sample.rank, sample.higgs_norm()]
                        + [float(v) for v in evs])
            if not tk.certified_tail:
                warn_rows.append(c + ["uncertified-tail"])
            if not tk.weitzenboeck_ok:
                weitz_fail += 1
                warn_rows.append(c + ["sign-flipped-kernel-nonzero"])
        max_rank = max((len(r) - 5 for r in rows), default=0)
        header = ["xi1", "xi2", "xi3", "rank", "higgs_norm"] + [f"eig{i+1}" for i in range(max_rank)]
        rows = [r + [""] * (len(header) - len(r)) for r in rows]
        _write_csv(out_dir, "samples.csv", header, rows)
        _write_csv(out_dir, "warnings.csv", ["xi1", "xi2", "xi3", "warning"], warn_rows)
        ranks = sorted({int(r[3]) for r in rows})
        _write_json(out_dir, "transform.json", {
            "status": "ok" if weitz_fail == 0 else "weitzenboeck-violation",
            "points_total": len(pts),
            "points_singular": sum(1 for s, _, _ in results if s == "singular"),
            "ranks_seen": ranks,
            "singular_set": [[float(x) for x in sp.point.coeffs] for sp in sing.points],
            "warnings": len(warn_rows),
        }, cfg)
        print(f"transform: {len(rows)} samples, ranks {ranks}, {len(warn_rows)} warning(s)")
        if weitz_fail:
            print("certification failure: sign-flipped kernel nonzero at some points")
            return EXIT_CERTIFICATION
    return EXIT_OK


def cmd_weights(cfg: PipelineConfig, out_dir: str, point_str: str,
                seed: int | None = None) -> int:
    manifest = Manifest(cfg, out_dir)
    with manifest.stage("weights"):
        dl = torus.dual_lattice(cfg.lattice)
        p = torus.reduce([float(v) for v in point_str.split(",")], dl)
        sing = model.singularity_set(cfg.model_plus, cfg.model_minus, cfg.lattice)
        d = sing.distance_to(p)
        if d > 1e-7:
            print(f"point {point_str} not in the singular set (distance {d:.3e})",
                  file=sys.stderr)
            return EXIT_VALIDATION
        if not cfg.lattice.is_split():
            print("weights need a split lattice (S^1 x T^2)", file=sys.stderr)
            return EXIT_VALIDATION
        cc = torus.ComplexCoords(lattice=cfg.lattice)
        w_plus, w_minus = algebra.predict_point_weights(
            cfg.model_plus, cfg.model_minus, p, cfg.lattice, cc)
        k_pred = tuple(list(w_plus.weights) + [-w for w in w_minus.weights])
        if not k_pred:
            print("no weights predicted at this point")
            _write_json(out_dir, "weights_report.json",
                        {"status": "EMPTY", "point": [float(x) for x in p.coeffs]}, cfg)
            return EXIT_OK

        # Honest transform samples near a singular point only exist for
        # positive-rank monopoles; T^3-invariant pipelines produce rank 0, so
        # the local Dirac-type model at the predicted weights instantiates the
        # sample field (provenance recorded).
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        frame = None
        if len(k_pred) > 1:
            z = rng.standard_normal((len(k_pred), len(k_pred))) \
                + 1j * rng.standard_normal((len(k_pred), len(k_pred)))
            frame, _ = np.linalg.qr(z)
        consts = tuple(float(c) for c in 0.3 * rng.standard_normal(len(k_pred)))
        p_eucl = p.covector()
        fld = synthetic.DiracMonopoleField(center=p_eucl, weights=k_pred,
                                           consts=consts, frame=frame)
        d0 = cfg.radii_factor * min(1.0, sing.min_separation())
        radii = [d0 * 2.0 ** (-j) for j in range(cfg.radii_levels)]
        report = monopole.fit_singularity_weights(
            fld.phi, p_eucl, radii, predictions=(w_plus, w_minus))
        winding = monopole.det_winding_weight_sum(fld, radius=0.4 * radii[-1],
                                                  eps=0.4 * radii[-1])
        check = report.multiset_check()
        status = ("FLAGGED" if report.flagged
                  else "PASS" if (check and winding == report.total) else "FAIL")
        ray_rows = []
        for ridx, ray in enumerate(report.per_ray_fits):
            for j, r in enumerate(report.radii):
                phi = fld.phi(p_eucl + r * monopole.default_rays()[ridx])
                for ev in np.sort(np.linalg.eigvalsh(-1j * phi))[::-1]:
                    ray_rows.append([ridx, float(r), float(ev)])
        _write_csv(out_dir, "weights_rays.csv", ["ray", "radius", "eigenvalue"], ray_rows)
        _write_json(out_dir, "weights_report.json", {
            "status": status,
            "point": [float(x) for x in p.coeffs],
            "sample_provenance": "synthetic-local-model",
            "fitted": [float(v) for v in report.fitted],
            "rounded": list(report.rounded),
            "isotropy_spread": report.isotropy_spread,
            "max_round_dev": report.max_round_dev,
            "predicted_w_plus": list(w_plus.weights),
            "predicted_w_minus": list(w_minus.weights),
            "det_winding": winding,
            "weight_sum": report.total,
        }, cfg)
        print(f"weights at {point_str}: fitted k = {report.rounded}, "
              f"predicted +{tuple(w_plus.weights)} / -{tuple(w_minus.weights)}, "
              f"winding {winding} -> {status}")
        if status == "FLAGGED":
            return EXIT_CERTIFICATION
        if status == "FAIL":
            return EXIT_CERTIFICATION
    return EXIT_OK


def cmd_report(cfg: PipelineConfig, out_dir: str) -> int:
    manifest = Manifest(cfg, out_dir)
    with manifest.stage("report"):
        summary = {"config_hash": cfg.config_hash, "artifacts": {}}
        for name in ("validation.json", "solve.json", "transform.json", "weights_report.json"):
            path = os.path.join(out_dir, name)
            if os.path.exists(path):
                with open(path) as fh:
                    summary["artifacts"][name] = json.load(fh)
        _write_json(out_dir, "report.json", summary, cfg)
        print(f"report written with {len(summary['artifacts'])} artifact(s)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nahmlab",
                                     description="Nahm-curve / dual-torus monopole laboratory")
    parser.add_argument("command", choices=["validate", "solve", "transform", "weights", "report"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--refine", type=int, default=0)
    parser.add_argument("--curve", default=None)
    parser.add_argument("--point", default=None)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except (ValidationError, KeyError, json.JSONDecodeError) as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = args.out or cfg.raw.get("output_dir", "nahmlab_out")
    try:
        if args.command == "validate":
            return cmd_validate(cfg, out_dir)
        if args.command == "solve":
            return cmd_solve(cfg, out_dir)
        if args.command == "transform":
            return cmd_transform(cfg, out_dir, args.curve, refine=args.refine,
                                 threads=args.threads)
        if args.command == "weights":
            if not args.point:
                print("--point required for weights", file=sys.stderr)
                return EXIT_VALIDATION
            return cmd_weights(cfg, out_dir, args.point, seed=args.seed)
        if args.command == "report":
            return cmd_report(cfg, out_dir)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NahmLabError as exc:
        print(f"certification error: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
