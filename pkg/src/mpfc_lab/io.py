"""Run logging, CSV export, and binary field snapshots."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .spectral import Field, Grid

LOG_COLUMNS = (
    "t",
    "mean_phi",
    "mean_phit",
    "charge",
    "energy",
    "full_energy",
    "hminus1_phit",
    "h2_phi",
    "identity_residual",
)

SNAPSHOT_MAGIC = b"MPFC1"


@dataclass
class RunLog:
    """Per-step time series of masses, energies, norms, and residuals."""

    rows: list = field(default_factory=list)

    def add(self, **kwargs):
        missing = set(LOG_COLUMNS) - set(kwargs)
        extra = set(kwargs) - set(LOG_COLUMNS)
        if missing or extra:
            raise ValueError(f"bad log row: missing={missing}, extra={extra}")
        self.rows.append(tuple(float(kwargs[c]) for c in LOG_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        idx = LOG_COLUMNS.index(name)
        return np.array([r[idx] for r in self.rows])


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_timeseries(log: RunLog, path) -> None:
    """CSV with a fixed header and 17 significant digits per value."""
    lines = [",".join(LOG_COLUMNS)]
    for row in log.rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv(path, header, rows) -> None:
    """Generic deterministic CSV writer used by the experiment reports."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row)
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class Snapshot:
    """One stored (phi, phi_t) pair with its header metadata."""

    dim: int
    n_points: tuple
    time: float
    beta: float
    epsilon: float
    phi: np.ndarray
    phi_t: np.ndarray

    @classmethod
    def of(cls, state, epsilon: float) -> "Snapshot":
        grid = state.grid
        return cls(
            dim=grid.dim,
            n_points=(grid.n_points,) * grid.dim,
            time=state.time,
            beta=state.beta,
            epsilon=epsilon,
            phi=state.phi.values.copy(),
            phi_t=state.phi_t.values.copy(),
        )


def save_snapshot(snap: Snapshot, path) -> None:
    """Binary layout: magic "MPFC1", little-endian uint64 dim and per-axis
    counts, little-endian float64 time/beta/epsilon, then phi and phi_t
    samples as little-endian float64 in row-major order."""
    count = 1
    for n in snap.n_points:
        count *= n
    if snap.phi.shape != tuple(snap.n_points) or snap.phi_t.shape != tuple(
        snap.n_points
    ):
        raise ValueError("snapshot payload shape does not match header")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Q", snap.dim))
        fh.write(struct.pack(f"<{snap.dim}Q", *snap.n_points))
        fh.write(struct.pack("<3d", snap.time, snap.beta, snap.epsilon))
        fh.write(np.ascontiguousarray(snap.phi, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(snap.phi_t, dtype="<f8").tobytes())


def load_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {raw[:5]!r}")
    off = 5
    (dim,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if dim not in (1, 2, 3):
        raise ValueError(f"bad snapshot dim {dim}")
    n_points = struct.unpack_from(f"<{dim}Q", raw, off)
    off += 8 * dim
    time, beta, epsilon = struct.unpack_from("<3d", raw, off)
    off += 24
    count = 1
    for n in n_points:
        count *= n
    expected = off + 2 * count * 8
    if len(raw) != expected:
        raise ValueError(
            f"snapshot payload length {len(raw) - off} != {2 * count * 8}"
        )
    phi = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(n_points)
    off += count * 8
    phi_t = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(
        n_points
    )
    return Snapshot(
        dim=int(dim),
        n_points=tuple(int(n) for n in n_points),
        time=time,
        beta=beta,
        epsilon=epsilon,
        phi=phi.copy(),
        phi_t=phi_t.copy(),
    )


def snapshot_state(snap: Snapshot, grid: Grid):
    """Rebuild (phi, phi_t) fields from a snapshot on a matching grid."""
    if grid.shape != tuple(snap.n_points):
        raise ValueError("grid shape does not match snapshot")
    return Field(grid, values=snap.phi), Field(grid, values=snap.phi_t)
