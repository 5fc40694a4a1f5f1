"""Column-oriented dataset of treatments, outcomes and covariates.

The on-disk format is CSV with a ``name:role`` header, where the role is one
of ``a`` (treatment), ``y`` (outcome) or ``x`` (covariate).  Values are
IEEE-754 doubles printed with 17 significant digits so a round trip through
CSV is bit-exact.  Row order is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

ROLES = ("a", "y", "x")


@dataclass(frozen=True)
class Dataset:
    """Immutable table of ``n`` samples over named, role-tagged columns."""

    names: tuple[str, ...]
    roles: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("values must be a 2-d array of shape (n, columns)")
        if values.shape[1] != len(self.names) or len(self.names) != len(self.roles):
            raise DataError("names, roles and value columns must align")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate column names")
        bad = [r for r in self.roles if r not in ROLES]
        if bad:
            raise DataError(f"unknown column roles: {bad}; expected one of {ROLES}")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset values must be finite (no NaN or infinities)")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "roles", tuple(self.roles))

    @classmethod
    def from_columns(cls, columns: list[tuple[str, str, np.ndarray]]) -> "Dataset":
        """Build from ``(name, role, values)`` triples of equal length."""
        names = tuple(name for name, _, _ in columns)
        roles = tuple(role for _, role, _ in columns)
        arrays = [np.asarray(v, dtype=np.float64).reshape(-1) for _, _, v in columns]
        lengths = {len(a) for a in arrays}
        if len(lengths) > 1:
            raise DataError("all columns must have equal length")
        values = np.column_stack(arrays) if arrays else np.empty((0, 0))
        return cls(names, roles, values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def treatments(self) -> tuple[str, ...]:
        return tuple(n for n, r in zip(self.names, self.roles) if r == "a")

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(n for n, r in zip(self.names, self.roles) if r == "y")

    @property
    def covariates(self) -> tuple[str, ...]:
        return tuple(n for n, r in zip(self.names, self.roles) if r == "x")

    def column(self, name: str) -> np.ndarray:
        if name not in self.names:
            raise ConfigError(f"no column named {name!r}")
        return self.values[:, self.names.index(name)]

    def columns(self, names) -> np.ndarray:
        """Stack the requested columns into an (n, k) matrix."""
        return np.column_stack([self.column(name) for name in names])

    def role(self, name: str) -> str:
        if name not in self.names:
            raise ConfigError(f"no column named {name!r}")
        return self.roles[self.names.index(name)]

    def permuted(self, order: np.ndarray) -> "Dataset":
        return Dataset(self.names, self.roles, self.values[np.asarray(order)])

    def to_csv(self, path) -> None:
        path = Path(path)
        header = ",".join(f"{n}:{r}" for n, r in zip(self.names, self.roles))
        with path.open("w", newline="") as fh:
            fh.write(header + "\n")
            for row in self.values:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip()
            names, roles = [], []
            for cell in header.split(","):
                if ":" not in cell:
                    raise ConfigError(
                        f"untagged column {cell!r}: header cells must be name:role"
                    )
                name, role = cell.rsplit(":", 1)
                if role not in ROLES:
                    raise ConfigError(f"column {name!r} has unknown role {role!r}")
                names.append(name)
                roles.append(role)
            rows = [line.strip() for line in fh if line.strip()]
        if rows:
            values = np.array(
                [[float(cell) for cell in row.split(",")] for row in rows]
            )
        else:
            values = np.empty((0, len(names)))
        if values.size and values.shape[1] != len(names):
            raise ConfigError("CSV row width does not match header")
        return cls(tuple(names), tuple(roles), values)
