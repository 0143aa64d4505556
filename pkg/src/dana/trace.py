"""Per-iteration solver records with CSV export."""

import csv
import io

import numpy as np

DANA_D_COLUMNS = ("iter", "obj_gap", "grad_norm", "feas_err", "msgs", "elapsed_s")
DANA_C_COLUMNS = ("t", "primal_err", "dual_err", "V_Q", "obj_gap", "feas_box", "feas_sum",
                  "compslack")
ROBUST_COLUMNS = ("t", "eq_violation", "err_to_opt", "feas_sum")


class SolverTrace:
    """Column-oriented trace with a fixed set of named columns.

    Missing values (e.g. ``obj_gap`` without an oracle) are stored as NaN.
    """

    def __init__(self, columns):
        self.columns = tuple(columns)
        self._data = {c: [] for c in self.columns}

    def append(self, **row):
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown trace columns {sorted(unknown)}")
        for c in self.columns:
            self._data[c].append(float(row.get(c, np.nan)))

    def __len__(self):
        return len(self._data[self.columns[0]])

    def __getitem__(self, column):
        return np.asarray(self._data[column])

    def last(self, column):
        return self._data[column][-1]

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for i in range(len(self)):
            writer.writerow([repr(self._data[c][i]) for c in self.columns])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        trace = cls(rows[0])
        for row in rows[1:]:
            trace.append(**{c: float(v) for c, v in zip(rows[0], row)})
        return trace

    def __repr__(self):
        return f"SolverTrace(columns={self.columns}, rows={len(self)})"
