"""Command-line front end: ``cylfold <command> [--config PATH] [--out DIR] ...``.

Exit codes: 0 success/PASS, 1 FAIL or failed evidence, 2 configuration or
I/O problems (with an error JSON document on stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import attractor, boxcover, pullback, verifier
from .config import Config, ConfigError, load_config, parse_grid
from .core import curve_cuts, vertical_segment
from .errors import CylfoldError, EvidenceFailure, ParamError
from .skewmap import check_torus_embedding

COMMANDS = ("check", "pullback", "estimate", "witness", "render", "embed", "boxcover", "demo-appendix-a")
FORWARD_TOL = 1e-9


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


class Runner:
    def __init__(self, cfg: Config, out: Path, cover_path: str | None = None):
        self.cfg = cfg
        self.out = out
        self.cover_path = cover_path
        self._map = None
        self._report = None

    @property
    def m(self):
        if self._map is None:
            self._map = self.cfg.build_map()
        return self._map

    def write(self, name: str, data) -> Path:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            path = self.out / name
            if isinstance(data, bytes):
                path.write_bytes(data)
            else:
                path.write_text(data, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write {name}: {exc}") from exc
        return path

    def report(self):
        if self._report is None:
            self._report = verifier.certify_all(self.m, grid=self.cfg.run.check_grid)
        return self._report

    def cover(self):
        if self.cover_path:
            try:
                return attractor.GridCover.read_pgm(self.cover_path)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read cover {self.cover_path}: {exc}") from exc
        r = self.cfg.run
        return attractor.estimate_attractor(self.m, r.samples, r.burn_in, r.iters, r.grid, r.seed, r.threads)

    # -- commands -----------------------------------------------------------
    def check(self):
        rep = self.report()
        doc = rep.to_dict()
        self.write("check.json", _dump(doc))
        return rep.passed, doc

    def pullback(self):
        rep = self.report()
        if not rep.passed:
            return False, {"status": "FAIL", "reason": "map not certified", "check": rep.to_dict()}
        pc = self.cfg.pullback
        L = vertical_segment(pc.theta0, pc.y0, pc.y0 + pc.extent)
        trace = pullback.find_cutting_curve(self.m, L)
        resid = pullback.validate_forward(self.m, trace)
        cuts = curve_cuts(trace.curves[-1], -1 + 1e-9, 1 - 1e-9)
        ok = resid < FORWARD_TOL and cuts
        doc = {"status": "PASS" if ok else "FAIL", **trace.summary(),
               "forward_residual": resid, "S_cuts_X": cuts}
        self.write("pullback.csv", trace.to_csv())
        self.write("pullback.json", _dump(doc))
        return ok, doc

    def _cover_stats(self, cov):
        pgm = cov.to_pgm()
        return pgm, {
            "grid": list(cov.resolution),
            "cells_set": cov.count(),
            "stripe_coverage": attractor.stripe_coverage(cov, self.m.params),
            "pgm_sha256": hashlib.sha256(pgm).hexdigest(),
        }

    def estimate(self):
        r = self.cfg.run
        cov = self.cover()
        pgm, stats = self._cover_stats(cov)
        doc = {"seed": r.seed, "samples": r.samples, "burn_in": r.burn_in, "iters": r.iters, **stats}
        self.write("cover.pgm", pgm)
        self.write("estimate.json", _dump(doc))
        return True, doc

    def render(self):
        cov = self.cover()
        pgm, stats = self._cover_stats(cov)
        self.write("render.pgm", pgm)
        return True, stats

    def witness(self):
        rep = self.report()
        if not rep.passed:
            return False, {"status": "FAIL", "reason": "map not certified", "check": rep.to_dict()}
        cov = self.cover()
        try:
            w = attractor.find_fold_witness(self.m, cov, rep)
        except EvidenceFailure as exc:
            doc = {"status": "FAIL", "failed_clause": exc.clause, "message": str(exc)}
            self.write("witness.json", _dump(doc))
            return False, doc
        doc = {**w.to_dict(), "stripe_coverage": attractor.stripe_coverage(cov, self.m.params)}
        self.write("witness.json", _dump(doc))
        return w.passed, doc

    def embed(self):
        e = self.cfg.embed
        doc = check_torus_embedding(self.m, e.collar, e.points, e.iters, self.cfg.run.seed)
        ok = doc["restriction_ok"] and doc["trapped"]
        doc = {"status": "PASS" if ok else "FAIL", **doc}
        self.write("embed.json", _dump(doc))
        return ok, doc

    def boxcover(self):
        bc = self.cfg.boxcover
        inst = []
        ok = True
        for n, lam, rho in bc.instances:
            spec, p1, p2 = boxcover.build_box_cover(int(n), float(lam), float(rho))
            slack = boxcover.cover_slack(spec, bc.grid)
            try:
                margin = boxcover.verify_box_cover(spec, p1, p2, bc.grid)
                passed = margin > slack
            except boxcover.CoverageFailure as exc:
                margin, passed = None, False
                inst_fail = exc.point
            net = boxcover.build_eps_net_contractions(spec, bc.eps)
            gap = net.max_gap(spec, bc.net_samples, self.cfg.run.seed)
            net_ok = gap <= bc.eps / 8
            entry = {"spec": spec.to_dict(), "margin": margin, "slack": slack, "cover_ok": passed,
                     "net": net.to_dict(), "net_max_gap": gap, "net_ok": net_ok}
            if margin is None:
                entry["uncovered_point"] = inst_fail
            inst.append(entry)
            ok = ok and passed and net_ok
        n, alpha, beta_p, shrink = bc.fold
        _, fold = boxcover.build_fold_map(int(n), float(alpha), float(beta_p), float(shrink))
        ok = ok and fold.passed
        doc = {"status": "PASS" if ok else "FAIL", "instances": inst, "fold": fold.to_dict()}
        self.write("boxcover.json", _dump(doc))
        return ok, doc

    def demo_appendix_a(self):
        doc = attractor.appendix_a_demo()
        ok = doc["attractor"] == [0, 2] and doc["f_of_2"] == 0 and doc["interior_to_boundary"]
        self.write("appendix_a.json", _dump(doc))
        return ok, doc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cylfold", description="Certify and explore the folded skew-product attractor.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--out", help="output directory (default from config, 'out')")
    ap.add_argument("--seed", type=int, help="override run.seed")
    ap.add_argument("--grid", help="override run.grid as RthetaxRy, e.g. 512x128")
    ap.add_argument("--threads", type=int, help="override run.threads")
    ap.add_argument("--cover", help="read an existing cover PGM instead of estimating")
    return ap


def _config_from(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    run = cfg.run
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.grid:
        run = replace(run, grid=parse_grid(args.grid))
    if args.threads is not None:
        run = replace(run, threads=max(1, args.threads))
    if args.out:
        run = replace(run, out=args.out)
    return replace(cfg, run=run)


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from(args)
        runner = Runner(cfg, Path(cfg.run.out), args.cover)
        ok, doc = getattr(runner, args.command.replace("-", "_"))()
    except (ConfigError, ParamError) as exc:
        return _error("config", exc, 2)
    except OSError as exc:
        return _error("io", exc, 2)
    except CylfoldError as exc:
        return _error("fail", exc, 1)
    sys.stdout.write(_dump(doc))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
