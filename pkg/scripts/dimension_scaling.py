"""Box dimension of recurrence masks and chain-time scaling fits."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from _common import dump, parse
from chainrec.analysis import box_dimension, fit_csv, scaling_exponent
from chainrec.generalized import gr_estimate
from chainrec.jumpgraph import build_jump_graph
from chainrec.masks import RegionMask
from chainrec.space import in_cantor_set
from chainrec.systems import SystemSpec, instantiate, restrict


@dataclass
class Config:
    """Dimension and scaling study."""
    cantor_depth: int = 8
    f1_cells: int = 720
    f1_eps: list = field(default_factory=lambda: [1 / 20, 1 / 40, 1 / 80, 1 / 160, 1 / 320])
    f3_cells: int = 2187
    out_dir: str = "out/dimension_scaling"


def main(cfg: Config) -> None:
    out = Path(cfg.out_dir)
    res = {}
    n = 3**cfg.cantor_depth
    scales = [3.0**-k for k in range(1, cfg.cantor_depth - 1)]
    line = instantiate(SystemSpec("identity", {"chart": "interval"}), 1.0 / n)
    idx = np.rint(line.points[:, 0] * n).astype(int)
    fit = box_dimension(RegionMask(line, in_cantor_set(np.minimum(idx, n - 1), cfg.cantor_depth), "K"), scales)
    res["cantor_dimension"] = fit.record()
    (out / "cantor_counts.csv").parent.mkdir(parents=True, exist_ok=True)
    (out / "cantor_counts.csv").write_text(fit_csv(fit.scales, fit.counts, ("scale", "count")))

    f1 = instantiate(SystemSpec("f1"), 1.0 / cfg.f1_cells)
    gm = gr_estimate(f1)
    res["f1_gr_dimension"] = box_dimension(gm, [x for x in np.geomspace(2 * f1.eta, 40 * f1.eta, 5)]).record()
    m = f1.n
    sf = scaling_exponent(build_jump_graph(f1, max(cfg.f1_eps)),
                          [(int(0.7 * m), int(0.3 * m)), (int(0.74 * m), int(0.26 * m))], cfg.f1_eps)
    res["f1_scaling"] = sf.record()
    (out / "f1_scaling.csv").write_text(fit_csv(cfg.f1_eps, sf.times, ("eps", "chain_time")))

    f3 = instantiate(SystemSpec("f3"), 1.0 / cfg.f3_cells)
    depth = int(round(np.log(cfg.f3_cells) / np.log(3)))
    sub, _ = restrict(f3, in_cantor_set(np.arange(f3.n), depth))
    piece = np.flatnonzero(sub.points[:, 0] < 1 / 3)
    a, b = int(piece[0]), int(piece[-1])
    gap = sub.metric.pairwise(sub.points[piece[1:]], sub.points[piece[:-1]]).max()
    top = float(sub.metric.pairwise(sub.points[a : a + 1], sub.points[b : b + 1])[0])
    eps = [top / 2**j for j in range(12) if top / 2**j >= gap * 1.001]
    res["f3_cantor_scaling"] = scaling_exponent(build_jump_graph(sub, top), [(a, b)], eps).record()
    for k, v in res.items():
        print(k, {kk: v[kk] for kk in ("dimension", "residual") if kk in v})
    dump({"config": asdict(cfg), "results": res}, out / "summary.json")


if __name__ == "__main__":
    main(parse(Config))
