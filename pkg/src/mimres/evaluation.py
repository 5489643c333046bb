"""Scoring harness: rank-based AUC, cross-domain matrices, validation curves
and checkpoint selection."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .blocks import ImageSample, Label
from .errors import InputError, MissingPrerequisiteError, UndefinedMetricError

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScoreItem:
    score: float
    label: Label
    sample_id: str
    domain_tag: str


@dataclass(frozen=True)
class ScoreSet:
    items: list[ScoreItem]

    @classmethod
    def from_samples(cls, samples: Sequence[ImageSample], scores: Sequence[float]) -> "ScoreSet":
        if len(samples) != len(scores):
            raise InputError(f"{len(samples)} samples but {len(scores)} scores")
        return cls([ScoreItem(float(sc), s.label, s.sample_id, s.domain_tag)
                    for s, sc in zip(samples, scores)])


class SelectionMode(enum.Enum):
    ORACLE_VALIDATED = "oracle_validated"
    VALIDATION_FREE = "validation_free"


def auc(scores: ScoreSet) -> float:
    """Rank-based (Mann-Whitney) AUC with FAKE as the positive class; ties count 0.5."""
    values = np.array([it.score for it in scores.items], dtype=np.float64)
    positive = np.array([it.label is Label.FAKE for it in scores.items], dtype=bool)
    return auc_from_arrays(values, positive)


def auc_from_arrays(scores: np.ndarray, positive: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC undefined: {n_pos} positive and {n_neg} negative items")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def ema_smooth(values: Sequence[float], factor: float = 0.8) -> list[float]:
    """Exponential moving average used for plotted curves; raw series stay persisted."""
    out: list[float] = []
    state = None
    for v in values:
        state = v if state is None else factor * state + (1.0 - factor) * v
        out.append(state)
    return out


@dataclass
class EvalReport:
    selection_mode: SelectionMode
    matrix: dict[str, dict[str, dict[str, Any]]] = field(default_factory=dict)
    curves: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    selection: list[dict[str, Any]] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    def cell(self, train_domain: str, test_domain: str) -> dict[str, Any]:
        return self.matrix[train_domain][test_domain]

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "selection_mode": self.selection_mode.value,
            "matrix": self.matrix,
            "curves": {d: [[int(i), float(a)] for i, a in pts] for d, pts in self.curves.items()},
            "selection": self.selection,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        if payload.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise InputError(f"unsupported report schema version {payload.get('schema_version')}")
        return cls(
            selection_mode=SelectionMode(payload["selection_mode"]),
            matrix=payload["matrix"],
            curves={d: [(int(i), float(a)) for i, a in pts] for d, pts in payload["curves"].items()},
            selection=payload["selection"],
            schema_version=payload["schema_version"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(Path(path).read_text())


def cross_domain_eval(
    models: Mapping[str, Any],
    testsets: Mapping[str, list[ImageSample]],
    score_fn: Callable[[Any, list[ImageSample]], np.ndarray],
    selection_mode: SelectionMode = SelectionMode.VALIDATION_FREE,
) -> EvalReport:
    """Full (train domain x test domain) AUC matrix.

    A failing cell records its error and does not abort the run; diagonal
    cells are flagged as intra-domain. AUCs are stored as percentages.
    """
    report = EvalReport(selection_mode=selection_mode)
    for train_domain, model in models.items():
        row: dict[str, dict[str, Any]] = {}
        for test_domain, samples in testsets.items():
            cell: dict[str, Any] = {"intra_domain": train_domain == test_domain}
            try:
                scores = score_fn(model, samples)
                cell["auc_pct"] = 100.0 * auc(ScoreSet.from_samples(samples, scores))
            except Exception as exc:
                cell["error"] = f"{type(exc).__name__}: {exc}"
            row[test_domain] = cell
        report.matrix[train_domain] = row
    return report


def validation_curve(
    run_training: Callable[[Callable[[int, Any], None]], Any],
    testsets: Mapping[str, list[ImageSample]],
    score_fn: Callable[[Any, list[ImageSample]], np.ndarray],
    every: int = 50,
) -> dict[str, list[tuple[int, float]]]:
    """Snapshot-evaluate on every test set at a fixed cadence during training.

    ``run_training`` must accept an ``on_step(step, model)`` callback and run
    the training loop to completion. Scoring is deterministic, so curves
    reproduce exactly under identical seeds.
    """
    if every < 1:
        raise InputError(f"cadence must be >= 1, got {every}")
    curves: dict[str, list[tuple[int, float]]] = {domain: [] for domain in testsets}

    def on_step(step: int, model: Any) -> None:
        if step % every != 0:
            return
        for domain, samples in testsets.items():
            scores = score_fn(model, samples)
            curves[domain].append((step, auc(ScoreSet.from_samples(samples, scores))))

    run_training(on_step)
    return curves


@dataclass(frozen=True)
class CheckpointRef:
    step: int
    path: Path


def select_model(
    checkpoints: Sequence[CheckpointRef],
    mode: SelectionMode,
    val_scores: Sequence[float] | None = None,
    total_steps: int | None = None,
) -> CheckpointRef:
    """Pick a checkpoint: the final one (validation-free), or the best by
    validation AUC with ties broken by earliest iteration (oracle)."""
    if not checkpoints:
        raise MissingPrerequisiteError("no checkpoints to select from")
    ordered = sorted(checkpoints, key=lambda c: c.step)
    if mode is SelectionMode.VALIDATION_FREE:
        final = ordered[-1]
        if total_steps is not None and final.step != total_steps:
            raise MissingPrerequisiteError(
                f"final checkpoint at step {total_steps} missing; last available is {final.step}")
        return final
    if val_scores is None or len(val_scores) != len(checkpoints):
        raise InputError("oracle selection requires one validation AUC per checkpoint")
    pairs = sorted(zip(checkpoints, val_scores), key=lambda cv: cv[0].step)
    best = max(range(len(pairs)), key=lambda i: (pairs[i][1], -pairs[i][0].step))
    return pairs[best][0]


def selection_gap_record(
    test_domain: str,
    validated: tuple[int, float],
    final: tuple[int, float],
) -> dict[str, Any]:
    """Table-row record pairing validated and validation-free AUCs with their gap."""
    return {
        "test_domain": test_domain,
        "validated_step": validated[0],
        "validated_auc_pct": validated[1],
        "final_step": final[0],
        "final_auc_pct": final[1],
        "gap_pct": final[1] - validated[1],
    }
