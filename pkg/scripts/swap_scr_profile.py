"""Self-return barrier profile of the two-circle swap and its square.

Counts cells whose free-orbit self-barrier is at most t*eta for a range of t,
for f and f^2.  This is the measurement behind the SCR drop check.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from _common import dump, parse
from chainrec.jumpgraph import barrier, build_jump_graph
from chainrec.systems import SystemSpec, instantiate, power


@dataclass
class Config:
    """SCR profile of f and f^2 for the swap."""
    cells: int = 360
    eps_max: float = 0.05
    horizon: float = 2.0
    multiples: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0])
    out: str = "out/swap_scr_profile.json"


def main(cfg: Config) -> None:
    s = instantiate(SystemSpec("two_circle_swap"), 1.0 / cfg.cells)
    prof = {}
    for k in (1, 2):
        sk = power(s, k)
        bm = barrier(build_jump_graph(sk, cfg.eps_max), "free-orbit", horizon=cfg.horizon,
                     sources=np.zeros(0, dtype=np.int64))
        d = bm.diag / s.eta
        prof[f"f^{k}"] = {"counts": [int((d <= t).sum()) for t in cfg.multiples],
                          "max_finite": float(d[np.isfinite(d)].max())}
        print(k, prof[f"f^{k}"], flush=True)
    drops = [a - b for a, b in zip(prof["f^1"]["counts"], prof["f^2"]["counts"])]
    print("drop per tolerance:", dict(zip(cfg.multiples, drops)))
    dump({"config": asdict(cfg), "profile": prof, "drop": drops}, Path(cfg.out))


if __name__ == "__main__":
    main(parse(Config))
