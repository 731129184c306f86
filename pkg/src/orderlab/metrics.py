"""Run metrics: fixed-schema rows and a deterministic CSV codec.

Every run emits one row per (epoch, split). Floats serialize with %.17g,
which round-trips IEEE doubles exactly, so two runs agree iff their CSV
bytes agree; the determinism tests lean on that.
"""

import csv
import io

COLUMNS = (
    "run_id",
    "epoch",
    "split",
    "loss",
    "accuracy",
    "trigger_accuracy",
    "error_with_trigger",
    "epoch_mean_bias_term",
    "policy",
    "mode",
    "seed",
)

SPLITS = ("train", "test", "trigger")

_FLOAT_COLS = {"loss", "accuracy", "trigger_accuracy", "error_with_trigger",
               "epoch_mean_bias_term"}
_INT_COLS = {"epoch", "seed"}


def _fmt(col, value):
    if value is None or value == "":
        return ""
    if col in _FLOAT_COLS:
        return f"{float(value):.17g}"
    if col in _INT_COLS:
        return str(int(value))
    return str(value)


class MetricsLog:
    """Append-only list of metric rows with a stable CSV form."""

    def __init__(self, rows=None):
        self.rows = list(rows) if rows else []

    def add(self, **kw):
        unknown = set(kw) - set(COLUMNS)
        if unknown:
            raise ValueError(f"unknown metric columns {sorted(unknown)}")
        if kw.get("split") not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {kw.get('split')!r}")
        row = {c: kw.get(c) for c in COLUMNS}
        self.rows.append(row)
        return row

    def extend(self, other):
        self.rows.extend(other.rows)
        return self

    def filter(self, **match):
        keep = [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]
        return MetricsLog(keep)

    def column(self, name, **match):
        return [r[name] for r in self.filter(**match).rows]

    def to_string(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(c, row[c]) for c in COLUMNS])
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_string())
        return path

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"metrics file {path} lacks columns {sorted(missing)}")
            for raw in reader:
                row = {}
                for c in COLUMNS:
                    v = raw[c]
                    if v == "":
                        row[c] = None
                    elif c in _FLOAT_COLS:
                        row[c] = float(v)
                    elif c in _INT_COLS:
                        row[c] = int(v)
                    else:
                        row[c] = v
                log.rows.append(row)
        return log
