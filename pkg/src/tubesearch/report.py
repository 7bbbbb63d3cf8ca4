"""CSV and figure output for training, evaluation, and sweep runs.

CSV cells use ``repr`` for floats (shortest round-trip form), so a
seeded rerun produces byte-identical files.  Figures are rendered with
the Agg backend straight to PNG next to the CSVs.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .embedding import EpochStats  # noqa: E402
from .evaluation import RankedResult  # noqa: E402
from .io.records import ResultRecord, write_records  # noqa: E402
from .pipeline import EvalOutcome, SweepRow  # noqa: E402

PathLike = Union[str, Path]


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: PathLike, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_training_csv(history: Sequence[EpochStats], path: PathLike) -> None:
    _write_rows(path, ("epoch", "loss", "val_r_at_1"),
                [(h.epoch, float(h.loss), float(h.val_r_at_1)) for h in history])


def write_metrics_csv(outcome: EvalOutcome, path: PathLike) -> None:
    rows: List[Tuple[str, object]] = [
        ("split", outcome.split),
        ("n_queries", outcome.n_queries),
        ("n_candidates", outcome.n_candidates),
        ("threshold", float(outcome.threshold)),
    ]
    for k in sorted(outcome.recalls):
        rows.append((f"r_at_{k}", float(outcome.recalls[k])))
    _write_rows(path, ("metric", "value"), rows)


def write_sweep_csv(rows: Sequence[SweepRow], path: PathLike) -> None:
    ks = sorted(rows[0].recalls) if rows else []
    _write_rows(
        path,
        ["n_candidates", "pool_size"] + [f"r_at_{k}" for k in ks],
        [[r.n_candidates, r.pool_size] + [float(r.recalls[k]) for k in ks] for r in rows],
    )


def write_clip_csv(ranking: Sequence[Tuple[str, float]], path: PathLike) -> None:
    _write_rows(path, ("clip_id", "score"), [(c, float(s)) for c, s in ranking])


def write_results_jsonl(
    results: Sequence[RankedResult], path: PathLike, top_k: Optional[int] = None
) -> None:
    records = []
    for r in results:
        n = len(r.tube_ids) if top_k is None else min(top_k, len(r.tube_ids))
        records.append(
            ResultRecord(
                query_id=r.query_id,
                tube_ids=list(r.tube_ids[:n]),
                scores=[float(s) for s in r.scores[:n]],
            )
        )
    write_records(path, records)


def save_training_curves(history: Sequence[EpochStats], path: PathLike) -> None:
    """Loss on the left axis, holdout R@1 on the right."""
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [h.loss for h in history], color="tab:blue", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    twin = ax.twinx()
    twin.plot(epochs, [h.val_r_at_1 for h in history], color="tab:orange",
              label="holdout R@1")
    twin.set_ylabel("holdout R@1", color="tab:orange")
    twin.set_ylim(0.0, 1.05)
    twin.tick_params(axis="y", labelcolor="tab:orange")
    ax.set_title("training progress")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_recall_bars(recalls: Dict[int, float], path: PathLike, title: str = "recall") -> None:
    ks = sorted(recalls)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([f"R@{k}" for k in ks], [recalls[k] for k in ks], color="tab:blue", width=0.6)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("recall")
    ax.set_title(title)
    for i, k in enumerate(ks):
        ax.text(i, recalls[k] + 0.02, f"{recalls[k]:.3f}", ha="center")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_curves(rows: Sequence[SweepRow], path: PathLike) -> None:
    ks = sorted(rows[0].recalls) if rows else []
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r.n_candidates for r in rows]
    for k in ks:
        ax.plot(xs, [r.recalls[k] for r in rows], marker="o", label=f"R@{k}")
    ax.set_xlabel("candidate pool size")
    ax.set_ylabel("recall")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    ax.set_title("retrieval vs. pool size")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
