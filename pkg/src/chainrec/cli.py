"""Command-line front end: ``chainrec COMMAND --config run.ini``.

Every command writes ``results.jsonl`` (deterministic, no timestamps) and
``timing.log`` into the output directory.  Masks on 1-D and 2-D charts are
also written as PGM images.  Files are staged in a temporary directory and
moved into place only when the command succeeds.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import time
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from chainrec.analysis import (
    box_dimension,
    depth_sequence,
    fit_csv,
    power_invariance_check,
    quotient_factor,
    scaling_exponent,
)
from chainrec.config import RunConfig, load_config
from chainrec.errors import ArgumentError, ChainrecError, ConfigError
from chainrec.generalized import gr_classes, gr_estimate, gr_estimate_reweight
from chainrec.jumpgraph import (
    barrier,
    barrier_cache_key,
    build_jump_graph,
    read_barrier_cache,
    write_barrier_cache,
)
from chainrec.mane import injectivity, mane_estimate
from chainrec.masks import _jsonable, dilate
from chainrec.recurrence import (
    chain_components,
    chain_recurrent_set,
    mather_classes,
    strong_chain_recurrent_set,
)
from chainrec.systems import instantiate

COMMANDS = ("build", "cr", "scr", "mane", "gr", "classes", "depth", "power", "dim", "scaling", "quotient", "report")
CACHE_N_MAX = 3000  # full barrier matrices are only cached (and computed) up to this size


def _dumps(rec: dict) -> str:
    return json.dumps(_jsonable(rec), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Run:
    def __init__(self, cfg: RunConfig, out: Path, stage: Path, use_cache: bool):
        self.cfg = cfg
        self.out = out
        self.stage = stage
        self.use_cache = use_cache
        self.records: list[dict] = []
        self.timing: list[str] = []
        self._system = None
        self._graph = None

    # bookkeeping -------------------------------------------------------
    def log(self, msg: str) -> None:
        self.timing.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {msg}")

    def timed(self, label, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        self.log(f"{label} {time.perf_counter() - t0:.3f}s")
        return out

    def emit(self, rec: dict) -> None:
        self.records.append(rec)

    def emit_mask(self, mask) -> None:
        self.emit(mask.record())
        mask.write_pgm(self.stage / f"{mask.label.replace('^', '')}.pgm")

    # shared objects ------------------------------------------------------
    @property
    def system(self):
        if self._system is None:
            self._system = self.timed("instantiate", instantiate, self.cfg.spec, self.cfg.eta, self.cfg.cap)
        return self._system

    @property
    def d(self) -> dict:
        return self.system.defaults

    def graph(self):
        if self._graph is None:
            cut = max(self.d["eps"], self.d["tol"])
            self._graph = self.timed("jump_graph", build_jump_graph, self.system, cut)
        return self._graph

    def full_barrier(self):
        """Full free-orbit barrier, through the RBAR1 cache when enabled."""
        s = self.system
        g = self.graph()
        horizon = 10.0 * s.metric.diameter()
        path = None
        if self.use_cache:
            cdir = self.out / "cache"
            cdir.mkdir(parents=True, exist_ok=True)
            path = cdir / f"{barrier_cache_key(s, 'free-orbit', g.eps_max, horizon)}.rbar"
            bm = read_barrier_cache(path, s, horizon)
            if bm is not None:
                self.log(f"cache-hit {path.name}")
                return bm
            self.log(f"cache-miss {path.name}")
        bm = self.timed("barrier", barrier, g, "free-orbit", horizon)
        if path is not None:
            write_barrier_cache(path, bm)
        return bm

    def scr_mask(self):
        s = self.system
        if s.n <= CACHE_N_MAX:
            bm = self.full_barrier()
        else:
            bm = self.timed("barrier_diag", barrier, self.graph(), "free-orbit", 10 * self.d["tol"],
                            np.zeros(0, dtype=np.int64))
        return bm, strong_chain_recurrent_set(bm, self.d["tol"])

    def mane_mask(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return self.timed("mane", mane_estimate, self.system).mask

    def gr_mask(self):
        return self.timed("gr", gr_estimate, self.system)

    # commands ------------------------------------------------------------
    def cmd_build(self):
        s = self.system
        g = self.graph()
        rec = {"kind": "build", "system": s.spec.to_dict(), "eta": s.eta, "n": s.n, "defaults": self.d,
               "jump_edges": int(g.matrix.nnz), "eps_max": g.eps_max, "injective_share": injectivity(s)}
        if s.n <= CACHE_N_MAX:
            bm = self.full_barrier()
            rec["barrier_finite"] = int(np.isfinite(bm.matrix()).sum())
        self.emit(rec)

    def cmd_cr(self):
        eps = self.d["eps"]
        self.emit_mask(chain_recurrent_set(self.graph(), eps))
        self.emit(chain_components(self.graph(), eps).record())

    def cmd_scr(self):
        bm, mask = self.scr_mask()
        self.emit_mask(mask)
        if bm.full:
            self.emit(mather_classes(bm, self.d["tol"]).record())

    def cmd_mane(self):
        self.emit_mask(self.mane_mask())

    def cmd_gr(self):
        mask = self.gr_mask()
        self.emit_mask(mask)
        if self.cfg.reweight_iterations:
            r = self.timed("reweight", gr_estimate_reweight, self.system, self.cfg.reweight_iterations,
                           kappa=self.cfg.kappa, lam=self.cfg.lam)
            m = r.mask
            self.emit({"kind": "reweight", "sizes": r.sizes, "stable": r.stable, "field": r.field.record(),
                       "agrees_with_sigma": bool(np.array_equal(m.members, mask.members)),
                       "indices": m.indices.tolist()})

    def cmd_classes(self):
        mask = self.gr_mask()
        self.emit(self.timed("classes", gr_classes, self.system, None, mask).record())

    def cmd_depth(self):
        masks, depth = self.timed("depth", depth_sequence, self.system, self.cfg.max_depth)
        for m in masks:
            self.emit_mask(m)
        self.emit({"kind": "depth", "depth": depth, "sizes": [len(m) for m in masks]})

    def cmd_power(self):
        self.emit(self.timed("power", power_invariance_check, self.system, self.cfg.power_k))

    def cmd_dim(self):
        s = self.system
        scales = self.cfg.dim_scales or list(np.geomspace(2 * s.eta, 20 * s.eta, 5))
        for mask in (self.gr_mask(), chain_recurrent_set(self.graph(), self.d["eps"])):
            fit = self.timed(f"dim_{mask.label}", box_dimension, mask, scales)
            self.emit({**fit.record(), "mask": mask.label})
            (self.stage / f"dim_{mask.label}.csv").write_text(fit_csv(fit.scales, fit.counts, ("scale", "count")))

    def cmd_scaling(self):
        s = self.system
        eps_list = sorted(self.cfg.scaling_eps or [self.d["eps1"] * 2.0**-k for k in range(4)], reverse=True)
        g = self.timed("jump_graph_scaling", build_jump_graph, s, max(eps_list))
        pairs = self.cfg.scaling_pairs
        if not pairs:
            comps = chain_components(g, min(eps_list)).classes
            if not comps:
                raise ArgumentError("no chain component to pick a default pair from")
            big = max(comps, key=len)
            pairs = [(int(big[0]), int(big[-1]))]
        for a, b in pairs:
            if not (0 <= a < s.n and 0 <= b < s.n):
                raise ArgumentError(f"pair {a}:{b} outside the grid")
        fit = self.timed("scaling", scaling_exponent, g, pairs, eps_list)
        self.emit({**fit.record(), "pairs": [list(p) for p in pairs]})
        (self.stage / "scaling.csv").write_text(fit_csv(fit.eps, fit.times, ("eps", "chain_time")))

    def cmd_quotient(self):
        mask = self.gr_mask()
        classes = self.timed("classes", gr_classes, self.system, None, mask)
        self.emit(self.timed("quotient", quotient_factor, self.system, classes))

    def cmd_report(self):
        s = self.system
        self.graph()
        jobs = {
            "CR": lambda: chain_recurrent_set(self.graph(), self.d["eps"]),
            "SCR": lambda: self.scr_mask()[1],
            "Mane": self.mane_mask,
            "GR": self.gr_mask,
        }
        with ThreadPoolExecutor(max_workers=self.cfg.jobs) as pool:
            futures = {k: pool.submit(fn) for k, fn in jobs.items()}
            masks = {k: f.result() for k, f in futures.items()}
        for k in ("CR", "SCR", "Mane", "GR"):
            self.emit_mask(masks[k])
        order = ["GR", "SCR", "Mane", "CR"]
        chain = []
        for a, b in zip(order, order[1:]):
            inside = not (masks[a].members & ~dilate(s, masks[b].members)).any()
            chain.append({"subset": f"{a}<={b}", "holds_dilated": inside})
        self.emit({"kind": "summary", "system": s.spec.to_dict(), "eta": s.eta, "n": s.n,
                   "sizes": {k: len(masks[k]) for k in order}, "inclusions": chain,
                   "ordered": all(len(masks[a]) <= len(masks[b]) for a, b in zip(order, order[1:]))})


def run(cfg: RunConfig, command: str, out: Path | None = None, use_cache: bool | None = None) -> int:
    """Execute one command; returns the process exit status."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    out = Path(out if out is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    use_cache = cfg.cache if use_cache is None else use_cache
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out))
    r = Run(cfg, out, stage, use_cache)
    try:
        r.log(f"start {command} seed={cfg.seed}")
        t0 = time.perf_counter()
        getattr(r, f"cmd_{command}")()
        r.log(f"done {command} {time.perf_counter() - t0:.3f}s")
        header = {"kind": "run", "command": command, "config": cfg.record()}
        lines = [_dumps(header)] + [_dumps(rec) for rec in r.records]
        (stage / "results.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (stage / "timing.log").write_text("\n".join(r.timing) + "\n", encoding="utf-8")
        (out / "error.json").unlink(missing_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        err = {"kind": "error", "command": command, "type": type(exc).__name__, "message": str(exc)}
        if not isinstance(exc, ChainrecError):
            err["traceback"] = traceback.format_exc(limit=5)
        (out / "error.json").write_text(_dumps(err) + "\n", encoding="utf-8")
        print(_dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="chainrec", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI run file")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--jobs", type=int, help="worker threads")
    ap.add_argument("--no-cache", action="store_true", help="ignore and skip the barrier cache")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            cfg.jobs = args.jobs
    except ConfigError as exc:
        print(_dumps({"kind": "error", "type": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return 2
    cfg.seed = args.seed
    return run(cfg, args.command, Path(args.out) if args.out else None, False if args.no_cache else None)


if __name__ == "__main__":
    sys.exit(main())
