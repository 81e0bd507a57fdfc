"""Input-output tables: loading, validation, inventory correction, synthesis.

One accounting convention is used everywhere: rows supply, columns buy.
``Z[r, s]`` is the intermediate flow from sector ``r`` to sector ``s``,
``F[r, j]`` is final sales of ``r`` to destination ``j``, and gross output
satisfies ``Y[r] = sum_s Z[r, s] + sum_j F[r, j] (+ sum_j dN[r, j])`` when
inventory-change columns are present.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Relative slack for the gross-output identity in files we did not write.
BALANCE_RTOL = 1e-6
# Imputed inventory use is capped strictly below a buyer's value added so the
# corrected requirement-matrix column sums stay strictly below one.
VA_CAP_MARGIN = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Sector:
    """Identity of one row/column of the table."""

    sector_id: str
    country: str
    industry: str


@dataclass(frozen=True)
class IOTable:
    """A validated input-output table.

    Arrays are stored read-only.  ``delta_n`` holds inventory-change columns
    (may be negative, drawdowns); ``va`` is value added per buyer when the
    source reports it, otherwise it is derived as ``Y - column purchases``.
    """

    sectors: tuple[Sector, ...]
    destinations: tuple[str, ...]
    Z: np.ndarray
    F: np.ndarray
    Y: np.ndarray
    delta_n: np.ndarray | None = None
    va: np.ndarray | None = None

    def __post_init__(self) -> None:
        n, j = len(self.sectors), len(self.destinations)
        object.__setattr__(self, "Z", _frozen(self.Z))
        object.__setattr__(self, "F", _frozen(self.F))
        object.__setattr__(self, "Y", _frozen(self.Y))
        if self.delta_n is not None:
            object.__setattr__(self, "delta_n", _frozen(self.delta_n))
        if self.va is not None:
            object.__setattr__(self, "va", _frozen(self.va))

        if self.Z.shape != (n, n):
            raise ValueError(f"Z must be ({n}, {n}), got {self.Z.shape}")
        if self.F.shape != (n, j):
            raise ValueError(f"F must be ({n}, {j}), got {self.F.shape}")
        if self.Y.shape != (n,):
            raise ValueError(f"Y must be ({n},), got {self.Y.shape}")
        if self.delta_n is not None and self.delta_n.shape != (n, j):
            raise ValueError(f"delta_n must be ({n}, {j}), got {self.delta_n.shape}")
        if self.va is not None and self.va.shape != (n,):
            raise ValueError(f"va must be ({n},), got {self.va.shape}")

        ids = [s.sector_id for s in self.sectors]
        if len(set(ids)) != n:
            raise ValueError("duplicate sector ids")
        for name, arr in (("Z", self.Z), ("F", self.F), ("Y", self.Y)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative entries")
        if self.delta_n is not None and not np.all(np.isfinite(self.delta_n)):
            raise ValueError("delta_n contains non-finite entries")

        implied = self.Z.sum(axis=1) + self.F.sum(axis=1)
        if self.delta_n is not None:
            implied = implied + self.delta_n.sum(axis=1)
        scale = np.maximum(np.abs(self.Y), 1.0)
        gap = np.abs(self.Y - implied) / scale
        worst = int(np.argmax(gap))
        if gap[worst] > BALANCE_RTOL:
            raise ValueError(
                f"gross output identity fails for sector "
                f"{ids[worst]!r}: Y={self.Y[worst]!r} but flows sum to "
                f"{implied[worst]!r} (relative gap {gap[worst]:.3e})"
            )

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def n_destinations(self) -> int:
        return len(self.destinations)

    def value_added(self) -> np.ndarray:
        """Per-buyer value added; derived from the identity when not reported."""
        if self.va is not None:
            return self.va.copy()
        return self.Y - self.Z.sum(axis=0)


def load_io_table(path: str | Path) -> IOTable:
    """Read a delimited table from ``path``.

    Expected header: ``sector_id,country,industry``, one ``Z_<id>`` column per
    sector in row order, ``F_<dest>`` columns, optional ``dN_<dest>`` columns
    (same destinations, same order), optional ``VA``, then ``Y``.

    Raises:
        ValueError: malformed header, unparseable field (reported with its
            line number), duplicate ids, or a broken output identity (the
            worst sector is named).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]

    if header[:3] != ["sector_id", "country", "industry"]:
        raise ValueError(
            f"{path}: header must start with sector_id,country,industry"
        )
    z_cols = [c[2:] for c in header if c.startswith("Z_")]
    f_cols = [c[2:] for c in header if c.startswith("F_")]
    dn_cols = [c[3:] for c in header if c.startswith("dN_")]
    has_va = "VA" in header
    if not z_cols or not f_cols:
        raise ValueError(f"{path}: need at least one Z_ and one F_ column")
    if header[-1] != "Y":
        raise ValueError(f"{path}: last column must be Y")
    expected = (
        ["sector_id", "country", "industry"]
        + [f"Z_{c}" for c in z_cols]
        + [f"F_{c}" for c in f_cols]
        + [f"dN_{c}" for c in dn_cols]
        + (["VA"] if has_va else [])
        + ["Y"]
    )
    if header != expected:
        raise ValueError(f"{path}: columns out of order, expected {expected}")
    if dn_cols and dn_cols != f_cols:
        raise ValueError(
            f"{path}: dN_ destinations {dn_cols} do not match F_ destinations {f_cols}"
        )

    sectors: list[Sector] = []
    numeric: list[list[float]] = []
    n_fields = len(header)
    for lineno, row in rows:
        if len(row) != n_fields:
            raise ValueError(
                f"{path}:{lineno}: expected {n_fields} fields, got {len(row)}"
            )
        sectors.append(Sector(row[0], row[1], row[2]))
        vals = []
        for name, raw in zip(header[3:], row[3:]):
            try:
                vals.append(float(raw))
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: field {name!r}: could not parse {raw!r}"
                ) from None
        numeric.append(vals)

    ids = [s.sector_id for s in sectors]
    if z_cols != ids:
        raise ValueError(
            f"{path}: Z_ columns {z_cols} do not match sector rows {ids}"
        )

    data = np.array(numeric, dtype=float)
    n, j = len(ids), len(f_cols)
    pos = 0
    Z = data[:, pos : pos + n]
    pos += n
    F = data[:, pos : pos + j]
    pos += j
    delta_n = None
    if dn_cols:
        delta_n = data[:, pos : pos + j]
        pos += j
    va = data[:, pos] if has_va else None
    if has_va:
        pos += 1
    Y = data[:, pos]
    return IOTable(
        sectors=tuple(sectors),
        destinations=tuple(f_cols),
        Z=Z,
        F=F,
        Y=Y,
        delta_n=delta_n,
        va=va,
    )


def save_io_table(table: IOTable, path: str | Path) -> None:
    """Write ``table`` so that ``load_io_table`` round-trips bit-identically.

    Floats are written with ``repr``, which is exact for binary64.
    """
    path = Path(path)
    header = (
        ["sector_id", "country", "industry"]
        + [f"Z_{s.sector_id}" for s in table.sectors]
        + [f"F_{d}" for d in table.destinations]
        + ([f"dN_{d}" for d in table.destinations] if table.delta_n is not None else [])
        + (["VA"] if table.va is not None else [])
        + ["Y"]
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r, sec in enumerate(table.sectors):
            row: list[str] = [sec.sector_id, sec.country, sec.industry]
            row += [repr(float(v)) for v in table.Z[r]]
            row += [repr(float(v)) for v in table.F[r]]
            if table.delta_n is not None:
                row += [repr(float(v)) for v in table.delta_n[r]]
            if table.va is not None:
                row.append(repr(float(table.va[r])))
            row.append(repr(float(table.Y[r])))
            writer.writerow(row)


def inventory_correct(table: IOTable) -> IOTable:
    """Fold inventory-change columns into intermediate flows.

    Each supplier's inventory change toward a destination is allocated over
    that supplier's buyers in the destination's country, proportionally to
    existing flows; when no sector carries the destination's country label the
    allocation falls back to all buyers.  Imputed use is capped just below
    each buyer's value added, then flows, gross output, and value added are
    rebuilt from the corrected matrix.

    Raises:
        ValueError: no inventory-change columns, or a nonzero change with no
            flows to allocate it over.
    """
    if table.delta_n is None:
        raise ValueError("table has no inventory-change columns to fold in")

    n, j = table.n_sectors, table.n_destinations
    countries = [s.country for s in table.sectors]
    imputed = np.zeros((n, n))
    for dj, dest in enumerate(table.destinations):
        cols = [s for s in range(n) if countries[s] == dest]
        if not cols:
            cols = list(range(n))  # destination label matches no sector country
        basis = table.Z[:, cols]
        basis_sum = basis.sum(axis=1)
        change = table.delta_n[:, dj]
        dead = (basis_sum == 0) & (change != 0)
        if np.any(dead):
            bad = table.sectors[int(np.argmax(dead))].sector_id
            raise ValueError(
                f"sector {bad!r} has inventory change toward {dest!r} "
                "but no flows to allocate it over"
            )
        safe = np.where(basis_sum == 0, 1.0, basis_sum)
        imputed[:, cols] += basis * (change / safe)[:, None]

    # Cap imputed use at a shade under the buyer's value added so corrected
    # column sums stay strictly below one.
    va = table.value_added()
    use = imputed.sum(axis=0)
    cap = (1.0 - VA_CAP_MARGIN) * va
    hot = use > cap
    n_capped = int(hot.sum())
    if n_capped:
        shrink = np.where(hot & (use > 0), cap / np.where(use == 0, 1.0, use), 1.0)
        imputed = imputed * np.maximum(shrink, 0.0)[None, :]
        warnings.warn(
            f"imputed inventory use exceeded value added for {n_capped} "
            "buyer(s); capped",
            stacklevel=2,
        )

    z_new = table.Z + imputed
    n_floored = int((z_new < 0).sum())
    if n_floored:
        z_new = np.maximum(z_new, 0.0)
        warnings.warn(
            f"inventory drawdowns pushed {n_floored} flow(s) negative; floored at zero",
            stacklevel=2,
        )
    y_new = z_new.sum(axis=1) + table.F.sum(axis=1)
    va_new = y_new - z_new.sum(axis=0)
    return IOTable(
        sectors=table.sectors,
        destinations=table.destinations,
        Z=z_new,
        F=table.F,
        Y=y_new,
        delta_n=None,
        va=va_new,
    )


@dataclass(frozen=True)
class NetworkModel:
    """Requirement matrix plus final-demand structure, ready for analysis.

    ``A[r, s]`` is supplier ``r``'s share in one unit of buyer ``s``'s output;
    under market-clearing accounting this same matrix governs both cost shares
    and inventory-inclusive requirements.  ``B[:, j]`` are destination ``j``'s
    final-expenditure shares (columns sum to one) and ``dbar[j]`` its steady
    demand level.  ``nilpotent`` marks synthetic acyclic networks whose column
    sums may reach one; those are validated via ``A**n == 0`` instead of the
    column-sum bound.
    """

    sectors: tuple[Sector, ...]
    destinations: tuple[str, ...]
    A: np.ndarray
    B: np.ndarray
    dbar: np.ndarray
    nilpotent: bool = False

    def __post_init__(self) -> None:
        n, j = len(self.sectors), len(self.destinations)
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))
        object.__setattr__(self, "dbar", _frozen(self.dbar))
        if self.A.shape != (n, n):
            raise ValueError(f"A must be ({n}, {n}), got {self.A.shape}")
        if self.B.shape != (n, j):
            raise ValueError(f"B must be ({n}, {j}), got {self.B.shape}")
        if self.dbar.shape != (j,):
            raise ValueError(f"dbar must be ({j},), got {self.dbar.shape}")
        if np.any(self.A < 0) or not np.all(np.isfinite(self.A)):
            raise ValueError("A must be finite and nonnegative")
        if np.any(self.B < 0) or not np.all(np.isfinite(self.B)):
            raise ValueError("B must be finite and nonnegative")
        if np.any(self.dbar <= 0):
            raise ValueError("dbar must be strictly positive")
        colsums = self.B.sum(axis=0)
        if not np.allclose(colsums, 1.0, atol=1e-9):
            raise ValueError("B columns must sum to one")
        if self.nilpotent:
            if np.any(np.linalg.matrix_power(self.A, n) != 0):
                raise ValueError("nilpotent flag set but A**n != 0")
        else:
            acol = self.A.sum(axis=0)
            bad = np.flatnonzero(acol >= 1.0)
            if bad.size:
                names = ", ".join(
                    f"{self.sectors[s].sector_id}={acol[s]:.6f}" for s in bad
                )
                raise ValueError(f"column sums of A must be < 1; violated by {names}")

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def n_destinations(self) -> int:
        return len(self.destinations)

    @property
    def Atilde(self) -> np.ndarray:
        # Inventory-inclusive requirements coincide with cost shares when the
        # underlying flows clear markets, so no second matrix is stored.
        return self.A


def build_network(table: IOTable) -> NetworkModel:
    """Normalize a table into a :class:`NetworkModel`.

    Inventory-change columns must already be folded in (see
    :func:`inventory_correct`); building a network from an uncorrected table
    would misstate requirements.
    """
    if table.delta_n is not None:
        raise ValueError(
            "table still carries inventory-change columns; "
            "apply inventory_correct before building the network"
        )
    y = table.Y
    dead_buyers = (y == 0) & (table.Z.sum(axis=0) > 0)
    if np.any(dead_buyers):
        bad = table.sectors[int(np.argmax(dead_buyers))].sector_id
        raise ValueError(
            f"sector {bad!r} has zero output but positive purchases; "
            "its requirement column is undefined"
        )
    safe_y = np.where(y == 0, 1.0, y)
    A = table.Z / safe_y[None, :]
    dbar = table.F.sum(axis=0)
    if np.any(dbar <= 0):
        bad = table.destinations[int(np.argmin(dbar))]
        raise ValueError(f"destination {bad!r} has no final demand")
    B = table.F / dbar[None, :]
    return NetworkModel(
        sectors=table.sectors,
        destinations=table.destinations,
        A=A,
        B=B,
        dbar=dbar,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic network.

    ``topology`` is one of ``"line"``, ``"diamond"``, ``"random-sparse"``, or
    ``"dag"``.  ``depth`` is required for ``"dag"`` and fixes the exact
    nilpotency index.  ``weight_scale`` bounds requirement column sums for the
    stochastic topologies and sets edge weights for the deterministic ones.
    """

    n_sectors: int
    n_destinations: int = 1
    topology: str = "line"
    density: float = 0.3
    depth: int | None = None
    seed: int = 0
    final_share_floor: float = 0.05
    weight_scale: float = 0.6


def synthesize(spec: SyntheticSpec) -> NetworkModel:
    """Construct a synthetic :class:`NetworkModel` from ``spec``.

    Deterministic topologies (line, diamond) do not consume randomness, so the
    seed only matters for ``random-sparse`` and ``dag``.
    """
    n, j = spec.n_sectors, spec.n_destinations
    if n < 1:
        raise ValueError("need at least one sector")
    rng = np.random.Generator(np.random.Philox(spec.seed))
    nilpotent = False
    if spec.topology == "line":
        # Sector k supplies k-1; sector 0 sells to final demand.
        A = np.zeros((n, n))
        for k in range(1, n):
            A[k, k - 1] = 1.0
        B = np.zeros((n, j))
        B[0, :] = 1.0
        dbar = np.ones(j)
        nilpotent = True
    elif spec.topology == "diamond":
        if n != 4:
            raise ValueError("diamond topology is a fixed 4-sector shape")
        w = spec.weight_scale / 2.0
        A = np.zeros((4, 4))
        A[1, 0] = A[2, 0] = w  # two parallel suppliers of the final seller
        A[3, 1] = A[3, 2] = w  # one common source above them
        B = np.zeros((4, j))
        B[0, :] = 1.0
        dbar = np.ones(j)
        nilpotent = True
    elif spec.topology == "random-sparse":
        mask = rng.random((n, n)) < spec.density
        np.fill_diagonal(mask, False)
        raw = rng.random((n, n)) * mask
        target = spec.weight_scale * rng.uniform(0.3, 1.0, size=n)
        colsum = raw.sum(axis=0)
        scale = np.where(colsum > 0, target / np.where(colsum == 0, 1.0, colsum), 0.0)
        A = raw * scale[None, :]
        B = _random_expenditure_shares(rng, n, j, spec.final_share_floor)
        dbar = rng.uniform(0.8, 1.2, size=j)
    elif spec.topology == "dag":
        if spec.depth is None or not (1 <= spec.depth <= n):
            raise ValueError("dag topology needs 1 <= depth <= n_sectors")
        d = spec.depth
        level = np.empty(n, dtype=int)
        level[:d] = np.arange(d)  # a built-in chain pins the longest path
        if n > d:
            level[d:] = rng.integers(0, d, size=n - d)
        sup = level[:, None] > level[None, :]  # suppliers sit strictly higher
        edges = sup & (rng.random((n, n)) < spec.density)
        for k in range(1, d):
            edges[k, k - 1] = True
        counts = edges.sum(axis=0)
        weight = np.where(counts > 0, spec.weight_scale / np.maximum(counts, 1), 0.0)
        A = edges * weight[None, :]
        B = np.zeros((n, j))
        B[0, :] = 1.0
        dbar = np.ones(j)
        # sectors nobody buys from have zero output; their input columns
        # must be zero too or the model would not clear as a flow table
        output = np.linalg.solve(np.eye(n) - A, B @ dbar)
        A[:, output <= 0] = 0.0
        nilpotent = True
    else:
        raise ValueError(f"unknown topology {spec.topology!r}")

    sectors = tuple(Sector(f"s{k + 1}", "syn", f"i{k + 1}") for k in range(n))
    destinations = tuple(f"dest_{i + 1}" for i in range(j))
    return NetworkModel(
        sectors=sectors,
        destinations=destinations,
        A=A,
        B=B,
        dbar=dbar,
        nilpotent=nilpotent,
    )


def _random_expenditure_shares(
    rng: np.random.Generator, n: int, j: int, floor: float
) -> np.ndarray:
    """Columns on the simplex with every share at least ``floor / n``."""
    raw = rng.random((n, j))
    raw /= raw.sum(axis=0, keepdims=True)
    shares = floor / n + (1.0 - floor) * raw
    return shares / shares.sum(axis=0, keepdims=True)


def model_to_dict(model: NetworkModel) -> dict:
    """JSON-ready echo of a model, used by the CLI's --emit-model flag."""
    return {
        "sectors": [
            {"sector_id": s.sector_id, "country": s.country, "industry": s.industry}
            for s in model.sectors
        ],
        "destinations": list(model.destinations),
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "dbar": model.dbar.tolist(),
        "nilpotent": model.nilpotent,
    }
