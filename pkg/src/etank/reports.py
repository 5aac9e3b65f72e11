"""CSV and JSON writers with round-trip float formatting.

Floats go through repr(), which in Python 3 is the shortest string that
parses back to the exact same double.  Booleans are written as 0/1, and a
missing optional value becomes an empty cell.  Line endings are fixed to
"\\n" so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .evaluation import STEP_COLUMNS

__all__ = [
    "EPOCH_COLUMNS",
    "EPISODE_COLUMNS",
    "write_csv",
    "write_epochs_csv",
    "write_episodes_csv",
    "write_steps_csv",
    "write_json",
    "read_csv_dicts",
]

EPOCH_COLUMNS = [
    "epoch",
    "env_steps",
    "return",
    "episodes",
    "mean_episode_return",
    "eval_return",
    "max_episode_energy",
    "mean_episode_energy",
    "depletions",
    "alpha",
    "critic1_loss",
    "critic2_loss",
    "actor_loss",
]

EPISODE_COLUMNS = [
    "episode",
    "epoch",
    "return",
    "length",
    "energy_spent",
    "depleted",
    "term_cause",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: list, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_epochs_csv(path, records) -> None:
    rows = [
        [
            r.epoch,
            r.env_steps,
            r.return_,
            r.episodes,
            r.mean_episode_return,
            r.eval_return,
            r.max_episode_energy,
            r.mean_episode_energy,
            r.depletions,
            r.alpha,
            r.critic1_loss,
            r.critic2_loss,
            r.actor_loss,
        ]
        for r in records
    ]
    write_csv(path, EPOCH_COLUMNS, rows)


def write_episodes_csv(path, records) -> None:
    rows = [
        [r.episode, r.epoch, r.return_, r.length, r.energy_spent, r.depleted, r.term_cause]
        for r in records
    ]
    write_csv(path, EPISODE_COLUMNS, rows)


def write_steps_csv(path, rows) -> None:
    """Multi-episode step log: a leading episode column, then STEP_COLUMNS."""
    write_csv(path, ["episode"] + STEP_COLUMNS, rows)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_csv_dicts(path) -> list:
    """Read a CSV back into dicts, parsing numeric cells; '' becomes None."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, raw in row.items():
                if raw == "" or raw is None:
                    parsed[key] = None
                    continue
                try:
                    value = float(raw)
                    parsed[key] = int(value) if value.is_integer() and "." not in raw and "e" not in raw.lower() else value
                except ValueError:
                    parsed[key] = raw
            out.append(parsed)
    return out
