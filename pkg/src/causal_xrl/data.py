"""Trajectory datasets and their line-oriented file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .errors import EmptyDataset, IoError, MissingColumn

FORMAT = "causal-xrl/trajectories@1"


@dataclass
class StepRecord:
    episode: int
    step: int
    values: dict[str, float]  # every skeleton variable, action included
    action: float
    reward: float
    done: bool
    next_values: dict[str, float] | None = None

    def to_dict(self) -> dict:
        d = {
            "episode": self.episode,
            "step": self.step,
            "values": self.values,
            "action": self.action,
            "reward": self.reward,
            "done": self.done,
        }
        if self.next_values is not None:
            d["next"] = self.next_values
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "StepRecord":
        return cls(
            episode=int(d["episode"]),
            step=int(d["step"]),
            values={k: float(v) for k, v in d["values"].items()},
            action=float(d["action"]),
            reward=float(d["reward"]),
            done=bool(d["done"]),
            next_values=None if d.get("next") is None else {k: float(v) for k, v in d["next"].items()},
        )


@dataclass
class TrajectoryDataset:
    episodes: list[list[StepRecord]]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(ep) for ep in self.episodes)

    def records(self) -> Iterator[StepRecord]:
        for ep in self.episodes:
            yield from ep

    def columns(self) -> set[str]:
        cols: set[str] | None = None
        for r in self.records():
            keys = set(r.values)
            cols = keys if cols is None else cols & keys
        return cols or set()

    def require(self, names) -> None:
        if len(self) == 0:
            raise EmptyDataset("dataset has no records")
        have = self.columns()
        for n in names:
            if n not in have:
                raise MissingColumn(f"dataset is missing column {n!r}")

    def episode(self, index: int) -> list[StepRecord]:
        for ep in self.episodes:
            if ep and ep[0].episode == index:
                return ep
        raise IndexError(f"no episode {index}")

    # file format: header line with provenance, then one record per line

    def dumps(self) -> str:
        lines = [json.dumps({"format": FORMAT, "provenance": self.provenance}, sort_keys=True)]
        lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in self.records())
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrajectoryDataset":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise EmptyDataset("empty dataset file")
        header = json.loads(lines[0])
        if header.get("format") != FORMAT:
            raise IoError(f"not a trajectory file (format={header.get('format')!r})")
        episodes: list[list[StepRecord]] = []
        for ln in lines[1:]:
            r = StepRecord.from_dict(json.loads(ln))
            if not episodes or episodes[-1][0].episode != r.episode:
                episodes.append([])
            episodes[-1].append(r)
        return cls(episodes, header.get("provenance", {}))

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(self.dumps(), encoding="utf-8")
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "TrajectoryDataset":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(str(exc)) from exc
        return cls.loads(text)
