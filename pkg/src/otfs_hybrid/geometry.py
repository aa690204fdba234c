"""Frame geometry shared by every stage of the hybrid OTFS/OFDM link."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised when frame parameters violate a structural identity."""


@dataclass(frozen=True)
class OccupancyMask:
    """Which time columns carry OTFS and which carry OFDM."""

    M: int
    N: int
    otfs_columns: tuple[int, ...]
    ofdm_columns: tuple[int, ...]

    @classmethod
    def from_replication(cls, M: int, N: int, r: int) -> "OccupancyMask":
        otfs = tuple(range(0, N, r))
        ofdm = tuple(n for n in range(N) if n % r)
        return cls(M, N, otfs, ofdm)

    @classmethod
    def all_ofdm(cls, M: int, N: int) -> "OccupancyMask":
        return cls(M, N, (), tuple(range(N)))

    def column_samples(self, n: int) -> slice:
        return slice(n * self.M, (n + 1) * self.M)

    def sample_indices(self, columns) -> np.ndarray:
        """Flat sample indices (column-major frame) covered by ``columns``."""
        cols = np.asarray(columns, dtype=np.int64)
        if cols.size == 0:
            return np.zeros(0, dtype=np.int64)
        return (cols[:, None] * self.M + np.arange(self.M)[None, :]).ravel()

    @property
    def otfs_samples(self) -> np.ndarray:
        return self.sample_indices(self.otfs_columns)

    @property
    def ofdm_samples(self) -> np.ndarray:
        return self.sample_indices(self.ofdm_columns)


@dataclass(frozen=True)
class FrameGeometry:
    """Grid dimensions and numerology of one hybrid frame.

    ``M`` subcarriers (delay bins) by ``N`` OFDM symbols. OTFS occupies
    ``N_dd`` equally spaced columns starting at column 0; OFDM fills the
    remaining ``N_tf`` columns in slots of ``N_s`` consecutive symbols.
    """

    M: int
    N: int
    N_dd: int
    N_tf: int
    L_cp: int = 160
    delta_f: float = 60e3
    f_c: float = 28e9
    N_s: int = field(init=False)
    r: int = field(init=False)
    mask: OccupancyMask = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check(self.M, self.N, self.N_dd, self.N_tf, self.L_cp, self.delta_f, self.f_c)
        r = self.N // self.N_dd
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "N_s", self.N_tf // self.N_dd)
        object.__setattr__(self, "mask", OccupancyMask.from_replication(self.M, self.N, r))

    @property
    def f_s(self) -> float:
        return self.M * self.delta_f

    @property
    def T_s(self) -> float:
        return 1.0 / self.f_s

    @property
    def num_samples(self) -> int:
        return self.M * self.N

    @property
    def ofdm_fft_size(self) -> int:
        return self.M - self.L_cp

    def as_dict(self) -> dict:
        return dict(M=self.M, N=self.N, N_dd=self.N_dd, N_tf=self.N_tf,
                    L_cp=self.L_cp, delta_f=self.delta_f, f_c=self.f_c)

    def standalone_otfs(self) -> "FrameGeometry":
        """Same numerology with every column given to OTFS (r = 1)."""
        return FrameGeometry(self.M, self.N, self.N, 0, self.L_cp, self.delta_f, self.f_c)


def _check(M, N, N_dd, N_tf, L_cp, delta_f, f_c):
    for name, v in (("M", M), ("N", N), ("N_dd", N_dd), ("N_tf", N_tf), ("L_cp", L_cp)):
        if int(v) != v:
            raise GeometryError(f"{name} must be an integer, got {v!r}")
    if M < 1 or N < 1:
        raise GeometryError("M and N must be positive")
    if N_dd < 1:
        raise GeometryError("N_dd must be >= 1 (replication factor N/N_dd undefined)")
    if N_tf < 0:
        raise GeometryError("N_tf must be non-negative")
    if N_dd + N_tf != N:
        raise GeometryError(f"N_dd + N_tf != N ({N_dd} + {N_tf} != {N})")
    if N % N_dd:
        raise GeometryError(f"replication factor not integer (N/N_dd = {N}/{N_dd})")
    if N_tf % N_dd:
        raise GeometryError(f"N_dd * N_s != N_tf (N_tf={N_tf} not a multiple of N_dd={N_dd})")
    if N_tf and not 0 < L_cp < M:
        raise GeometryError(f"0 < L_cp < M violated (L_cp={L_cp}, M={M})")
    if L_cp < 0:
        raise GeometryError(f"L_cp must be non-negative (L_cp={L_cp})")
    if delta_f <= 0 or f_c <= 0:
        raise GeometryError("delta_f and f_c must be positive")


def validate_geometry(raw) -> FrameGeometry:
    """Build a validated geometry from a mapping or return an existing one.

    Errors name the violated identity; an already-valid geometry is returned
    unchanged.
    """
    if isinstance(raw, FrameGeometry):
        return raw
    required = ("M", "N", "N_dd", "N_tf")
    missing = [k for k in required if k not in raw]
    if missing:
        raise GeometryError(f"missing geometry fields: {', '.join(missing)}")
    kw = {k: raw[k] for k in ("M", "N", "N_dd", "N_tf", "L_cp", "delta_f", "f_c") if k in raw}
    for k in ("M", "N", "N_dd", "N_tf", "L_cp"):
        if k in kw:
            if int(kw[k]) != kw[k]:
                raise GeometryError(f"{k} must be an integer, got {kw[k]!r}")
            kw[k] = int(kw[k])
    return FrameGeometry(**kw)


DEFAULT_GEOMETRY = dict(M=512, N=16, N_dd=8, N_tf=8, L_cp=160, delta_f=60e3, f_c=28e9)
