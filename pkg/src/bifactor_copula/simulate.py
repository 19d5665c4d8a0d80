"""Simulation of ordinal responses from bi-factor and second-order copula models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OrdinalDataset
from .model import BIFACTOR, ModelSpec, build_spec, equal_cutpoints

TABLE1_TAUS = {
    "bifactor": ((0.45, 0.55, 0.65, 0.75), (0.30, 0.35, 0.40, 0.50)),
    "secondorder": ((0.40, 0.50, 0.60, 0.70), (0.30, 0.35, 0.40, 0.45)),
}


@dataclass(frozen=True)
class SimDesign:
    spec: ModelSpec
    n: int
    seed: int | np.random.SeedSequence = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        object.__setattr__(self, "n", int(self.n))


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox generator from an int or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def replication_seeds(seed: int, R: int) -> list[np.random.SeedSequence]:
    """Independent child streams, one per replication."""
    return np.random.SeedSequence(seed).spawn(R)


def draw(design: SimDesign, item_names=None) -> OrdinalDataset:
    """Sample ``design.n`` response rows by an inverse-cdf walk over each item's bands."""
    spec, n = design.spec, design.n
    rng = make_rng(design.seed)
    G = spec.G
    x0 = rng.random(n)
    xg = rng.random((n, G))
    V = rng.random((n, spec.d))
    gof = spec.groups.group_of
    if spec.structure != BIFACTOR:
        # group factors linked to the second-order factor
        for g in range(G):
            de = spec.group_links[g]
            xg[:, g] = de.fam.inv_ccdf(de.theta, xg[:, g], x0)
    codes = np.empty((n, spec.d), dtype=np.int64)
    for j in range(spec.d):
        th = spec.common_links[j]
        xj = xg[:, gof[j]]
        a = spec.cutpoints[j]
        if spec.structure == BIFACTOR:
            de = spec.group_links[j]
            u = th.fam.ccdf(th.theta, a[:, None], x0[None, :])
            H = de.fam.ccdf(de.theta, u, xj[None, :])
        else:
            H = th.fam.ccdf(th.theta, a[:, None], xj[None, :])
        codes[:, j] = np.sum(V[:, j][None, :] > H, axis=0)
    names = tuple(item_names) if item_names else ()
    return OrdinalDataset(codes, names, tuple(int(k) for k in spec.n_categories), (),
                          spec.groups.sizes)


def table1_design(K: int, family: str = "gumbel", n: int = 500, seed: int = 0) -> dict[str, SimDesign]:
    """The d=16, four-group simulation designs for both structures with equal-weight categories."""
    if K not in (3, 5):
        raise ValueError(f"table-1 designs use K in {{3, 5}}, got {K}")
    sizes = (4, 4, 4, 4)
    cut = [equal_cutpoints(K)] * 16
    out = {}
    for structure, (t_theta, t_delta) in TABLE1_TAUS.items():
        common = np.repeat(t_theta, 4)
        group = np.repeat(t_delta, 4) if structure == BIFACTOR else np.array(t_delta)
        spec = build_spec(structure, sizes, cut, [family] * 5, common_taus=common, group_taus=group)
        out[structure] = SimDesign(spec, n, seed)
    return out
