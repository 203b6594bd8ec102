"""Run configuration, stored as JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

from .coder import CoderConfig
from .evaluation import GridSpec, SplitSpec, parse_structure
from .learner import LearnerConfig
from .recommender import CorrectionConfig


def _only(cls, d, where):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown keys in '{where}': {sorted(unknown)}")
    return d


@dataclass
class RunConfig:
    structure: str = "toroid:10:4"
    coder: CoderConfig = field(default_factory=lambda: CoderConfig(kappa=2.0 ** -10))
    learner: LearnerConfig = None
    correction: CorrectionConfig = field(default_factory=CorrectionConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    dataset: List[str] = field(default_factory=list)
    output_dir: str = "out"
    subsample_users: Optional[int] = None
    subsample_seed: int = 0
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        if self.learner is None:
            self.learner = LearnerConfig(coder=self.coder)
        elif self.learner.coder != self.coder:
            self.learner = replace(self.learner, coder=self.coder)
        parse_structure(self.structure)

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every random seed set to ``seed``."""
        grid = self.grid
        if grid is not None:
            grid = replace(grid, seeds=[seed])
        return replace(self, learner=replace(self.learner, seed=seed),
                       split=replace(self.split, seed=seed), subsample_seed=seed, grid=grid)

    def to_dict(self) -> dict:
        learner = asdict(self.learner)
        learner.pop("coder")
        out = {
            "structure": self.structure,
            "coder": asdict(self.coder),
            "learner": learner,
            "correction": asdict(self.correction),
            "split": asdict(self.split),
            "dataset": list(self.dataset),
            "output_dir": self.output_dir,
            "subsample_users": self.subsample_users,
            "subsample_seed": self.subsample_seed,
            "grid": asdict(self.grid) if self.grid is not None else None,
        }
        out["correction"]["rating_range"] = list(self.correction.rating_range)
        out["split"]["fractions"] = list(self.split.fractions)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(_only(cls, d, "config"))
        coder = CoderConfig(**_only(CoderConfig, d.pop("coder", {"kappa": 2.0 ** -10}), "coder"))
        learner = LearnerConfig(coder=coder, **_only(LearnerConfig, d.pop("learner", {}), "learner"))
        corr = dict(_only(CorrectionConfig, d.pop("correction", {}), "correction"))
        if "rating_range" in corr:
            corr["rating_range"] = tuple(corr["rating_range"])
        split = dict(_only(SplitSpec, d.pop("split", {}), "split"))
        if "fractions" in split:
            split["fractions"] = tuple(split["fractions"])
        grid = d.pop("grid", None)
        dataset = d.pop("dataset", [])
        if isinstance(dataset, str):
            dataset = [dataset]
        return cls(coder=coder, learner=learner, correction=CorrectionConfig(**corr),
                   split=SplitSpec(**split), dataset=dataset,
                   grid=GridSpec.from_dict(grid) if grid is not None else None, **d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))
