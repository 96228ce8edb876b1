"""Output files: config.json, results.json and samples.csv."""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path
from typing import Optional, Sequence

from ..verdict import _jsonable

SCHEMA = 1


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_samples(path, rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> None:
    if not rows:
        return
    columns = list(columns or rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(r.get(k)) for k in columns})


def write_run(outdir, command: str, config: dict, verdicts, evidence, runtime_s: float,
              samples: Optional[Sequence[dict]] = None, sample_columns: Optional[Sequence[str]] = None,
              extra_timing: Optional[dict] = None) -> Path:
    """Write the three run files; only ``timing`` differs between identical runs.

    ``results.json`` carries the config without its output directory, so
    runs written to different places compare equal.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", config)
    results = {
        "schema": SCHEMA,
        "command": command,
        "config": {k: v for k, v in config.items() if k != "output"},
        "verdicts": verdicts,
        "evidence": evidence,
        "timing": {"finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                   "runtime_s": round(runtime_s, 3), **(extra_timing or {})},
    }
    write_json(out / "results.json", results)
    if samples:
        write_samples(out / "samples.csv", samples, sample_columns)
    return out / "results.json"


def load_results(path, drop_timing: bool = True) -> dict:
    res = json.loads(Path(path).read_text())
    if drop_timing:
        res.pop("timing", None)
    return res
