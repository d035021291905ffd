"""Sizes of CR, SCR, Mañé and GR for every built-in system, plus the dilated inclusion chain."""
from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from _common import dump, parse
from chainrec.analysis import recurrence_masks
from chainrec.masks import dilate
from chainrec.systems import SystemSpec, instantiate


@dataclass
class Config:
    """Recurrence-set table over the built-in systems."""
    systems: list = field(default_factory=lambda: ["identity", "rigid_rotation", "f1", "f2", "f3", "f4", "f5",
                                                   "torus_product", "two_circle_swap", "cantor_union"])
    cells: list = field(default_factory=lambda: [64, 64, 360, 2187, 2187, 0, 0, 120, 360, 729])
    disk_eta: float = 0.035
    out: str = "out/recurrence_table.json"


def main(cfg: Config) -> None:
    rows = {}
    for name, cells in zip(cfg.systems, cfg.cells):
        eta = cfg.disk_eta if cells == 0 else 1.0 / cells
        t = time.perf_counter()
        s = instantiate(SystemSpec(name), eta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = recurrence_masks(s)
        sizes = {k: len(v) for k, v in m.items()}
        order = [("GR", "SCR"), ("SCR", "Mane"), ("Mane", "CR")]
        holds = {f"{a}<={b}": not (m[a].members & ~dilate(s, m[b].members)).any() for a, b in order}
        rows[name] = {"n": s.n, "sizes": sizes, "inclusions": holds, "seconds": round(time.perf_counter() - t, 2)}
        print(f"{name:16s} n={s.n:6d} {sizes} {holds}", flush=True)
    dump({"config": asdict(cfg), "rows": rows}, Path(cfg.out))


if __name__ == "__main__":
    main(parse(Config))
