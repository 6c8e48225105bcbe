"""File formats shared across commands.

* dataset: plain text, one sample per line, N space-separated {0,1}
  characters; lines starting with '#' are comments; no header.
* metrics: CSV with a fixed header; missing values are empty fields.
* landscape surface / path: small CSVs of grid evaluations and projections.

Floats are written with repr (shortest round-trip form) so reruns with the
same seed produce byte-identical files.
"""

import csv

import numpy as np

from .exact import Dataset


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_dataset(path, dataset: Dataset, comments=()) -> None:
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        np.savetxt(fh, dataset.samples, fmt="%d", delimiter=" ")


def read_dataset(path) -> Dataset:
    """Parse a dataset file; records the source line number of every sample."""
    rows, lines = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split()
            if any(f not in ("0", "1") for f in fields):
                raise ValueError(f"{path}:{lineno}: entries must be 0 or 1")
            rows.append([int(f) for f in fields])
            lines.append(lineno)
    if not rows:
        raise ValueError(f"{path}: no samples found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent sample widths {sorted(widths)}")
    return Dataset(n_sites=len(rows[0]), samples=np.asarray(rows, dtype=np.uint8),
                   line_numbers=np.asarray(lines))


METRICS_HEADER = ["epoch", "nll", "energy", "energy_stderr", "epsilon",
                  "infidelity", "frac_out_sector", "seconds"]


def metrics_row(record) -> list[str]:
    return [
        str(record.epoch),
        _fmt(record.nll_train),
        _fmt(record.energy),
        _fmt(record.energy_stderr),
        _fmt(record.epsilon),
        _fmt(record.infidelity),
        _fmt(record.frac_out_of_sector),
        _fmt(record.wall_seconds),
    ]


def write_metrics(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for record in records:
            writer.writerow(metrics_row(record))


class MetricsWriter:
    """Incremental metrics sink: appends one CSV row per record."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(METRICS_HEADER)
        self._fh.flush()

    def __call__(self, record):
        self._writer.writerow(metrics_row(record))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    """Rows as dicts; numeric fields parsed, empty fields -> None."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, val in row.items():
                if val == "":
                    parsed[key] = None
                elif key == "epoch":
                    parsed[key] = int(val)
                else:
                    parsed[key] = float(val)
            out.append(parsed)
    return out


def write_surface(path, alpha_grid, beta_grid, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "beta", "loss"])
        for i, a in enumerate(alpha_grid):
            for j, b in enumerate(beta_grid):
                writer.writerow([_fmt(a), _fmt(b), _fmt(values[i, j])])


def write_path(path, epochs, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "alpha", "beta", "residual_norm"])
        for epoch, (alpha, beta, residual) in zip(epochs, rows):
            writer.writerow([str(epoch), _fmt(alpha), _fmt(beta), _fmt(residual)])
