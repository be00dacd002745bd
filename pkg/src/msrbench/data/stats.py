from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np


def coefficient_of_variation(counts) -> float:
    """Sample standard deviation (n-1 denominator) over the mean."""
    c = np.asarray(counts, dtype=np.float64)
    if c.size < 2:
        return 0.0
    m = c.mean()
    return float(c.std(ddof=1) / m) if m > 0 else 0.0


@dataclass
class ScenarioStats:
    interactions: list[int]
    users: list[int] = field(default_factory=list)
    items: list[int] = field(default_factory=list)
    cov: float = 0.0
    user_intersections: dict = field(default_factory=dict)
    item_intersections: dict = field(default_factory=dict)

    def intersect(self, i: int, j: int, what: str = "user") -> int:
        table = self.user_intersections if what == "user" else self.item_intersections
        return table[f"{min(i, j)}-{max(i, j)}"]

    def to_dict(self) -> dict:
        return asdict(self)


def _pairwise(keys: np.ndarray | None, scenario: np.ndarray, S: int):
    if keys is None:
        return [], {}
    sets = [set(np.unique(keys[scenario == s]).tolist()) for s in range(S)]
    inter = {f"{i}-{j}": len(sets[i] & sets[j]) for i, j in combinations(range(S), 2)}
    return [len(x) for x in sets], inter


def scenario_stats(dataset=None, *, scenario=None, user=None, item=None,
                   n_scenarios: int | None = None) -> ScenarioStats:
    """Per-scenario counts, COV and pairwise user/item overlaps.

    Pass a ``ProcessedDataset`` or the raw arrays as keywords.
    """
    if dataset is not None:
        scenario, user, item = dataset.scenario, dataset.user, dataset.item
        n_scenarios = dataset.n_scenarios
    scenario = np.asarray(scenario)
    S = int(n_scenarios if n_scenarios is not None else scenario.max() + 1)
    counts = np.bincount(scenario, minlength=S).tolist()
    users, ui = _pairwise(user, scenario, S)
    items, ii = _pairwise(item, scenario, S)
    return ScenarioStats(counts, users, items, coefficient_of_variation(counts), ui, ii)
