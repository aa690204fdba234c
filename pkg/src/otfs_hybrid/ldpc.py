"""Rate-1/2 LDPC codes: alist I/O, a quasi-cyclic IRA construction, a
systematic encoder and a normalized min-sum decoder.

LLR sign convention matches :mod:`qam`: positive means bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

_LLR_CLIP = 1e9


@dataclass(frozen=True, eq=False)
class CodeSpec:
    """Parity-check description. Message bits are codeword positions [0, k)."""

    n: int
    k: int
    rows: tuple[np.ndarray, ...] = field(repr=False)  # variable indices per check
    cols: tuple[np.ndarray, ...] = field(repr=False)  # check indices per variable

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def from_rows(cls, n: int, k: int, rows) -> "CodeSpec":
        rows = tuple(np.sort(np.asarray(r, dtype=np.int64)) for r in rows)
        cols = [[] for _ in range(n)]
        for c, vs in enumerate(rows):
            for v in vs:
                cols[v].append(c)
        return cls(n, k, rows, tuple(np.asarray(c, dtype=np.int64) for c in cols))

    def H(self) -> sp.csr_matrix:
        r = np.concatenate([np.full(len(v), c) for c, v in enumerate(self.rows)])
        c = np.concatenate(self.rows)
        return sp.csr_matrix((np.ones(r.size, dtype=np.uint8), (r, c)), shape=(self.m, self.n))

    def syndrome(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        return np.asarray(self.H().astype(np.int64) @ bits) % 2


# ---------------------------------------------------------------- alist I/O

def read_alist(path, k: int | None = None) -> CodeSpec:
    """Parse a MacKay alist file (1-based indices, zero padding allowed).

    ``k`` defaults to n - m (full-rank assumption).
    """
    tokens = Path(path).read_text().split()
    it = iter(int(t) for t in tokens)
    n, m = next(it), next(it)
    max_col, max_row = next(it), next(it)
    col_w = [next(it) for _ in range(n)]
    row_w = [next(it) for _ in range(m)]
    for w in col_w:
        for _ in range(max_col):
            next(it)
    rows = []
    for w in row_w:
        entries = [next(it) for _ in range(max_row)]
        idx = [e - 1 for e in entries if e > 0]
        if len(idx) != w:
            raise ValueError(f"alist row weight mismatch ({len(idx)} != {w})")
        rows.append(idx)
    code = CodeSpec.from_rows(n, n - m if k is None else k, rows)
    if [len(c) for c in code.cols] != col_w:
        raise ValueError("alist column lists disagree with row lists")
    return code


def write_alist(code: CodeSpec, path) -> None:
    col_w = [len(c) for c in code.cols]
    row_w = [len(r) for r in code.rows]
    mc, mr = max(col_w), max(row_w)
    lines = [f"{code.n} {code.m}", f"{mc} {mr}", " ".join(map(str, col_w)), " ".join(map(str, row_w))]
    for c in code.cols:
        lines.append(" ".join(str(x + 1) for x in c) + " 0" * (mc - len(c)))
    for r in code.rows:
        lines.append(" ".join(str(x + 1) for x in r) + " 0" * (mr - len(r)))
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------- construction

def make_qc_ira(n: int, Z: int, col_weight: int = 3, seed: int = 2024) -> CodeSpec:
    """Rate-1/2 code with a circulant-permutation information part and a
    block-dual-diagonal parity part (Z interleaved accumulator chains).

    Shifts are drawn so that no two information base columns close a
    length-4 cycle, and no information column pairs with a parity column.
    """
    if n % 2 or (n // 2) % Z:
        raise ValueError(f"n/2 = {n // 2} must be a multiple of Z = {Z}")
    m = k = n // 2
    kb = mb = m // Z
    if col_weight > mb:
        raise ValueError("column weight exceeds base rows")
    rng = np.random.default_rng(seed)
    deg = np.zeros(mb, dtype=int)
    base: list[dict[int, int]] = []
    for _ in range(kb):
        for _attempt in range(2000):
            order = np.lexsort((rng.random(mb), deg))
            rows = sorted(order[:col_weight].tolist())
            shifts = {a: int(rng.integers(Z)) for a in rows}
            if _shift_ok(shifts, base, Z):
                break
        else:
            raise RuntimeError("could not place circulants without 4-cycles")
        base.append(shifts)
        deg[rows] += 1

    check_rows: list[list[int]] = [[] for _ in range(m)]
    for b, shifts in enumerate(base):
        for a, s in shifts.items():
            for t in range(Z):
                check_rows[a * Z + (t + s) % Z].append(b * Z + t)
    for j in range(m):
        check_rows[j].append(k + j)
        if j >= Z:
            check_rows[j].append(k + j - Z)
    return CodeSpec.from_rows(n, k, check_rows)


def _shift_ok(new: dict[int, int], base: list[dict[int, int]], Z: int) -> bool:
    rows = sorted(new)
    for a, b in zip(rows, rows[1:]):
        if b == a + 1 and (new[b] - new[a]) % Z == 0:
            return False
    for old in base:
        common = [a for a in new if a in old]
        for i in range(len(common)):
            for j in range(i + 1, len(common)):
                a, b = common[i], common[j]
                if (new[a] - new[b] - old[a] + old[b]) % Z == 0:
                    return False
    return True


# ----------------------------------------------------------------- encoding

@lru_cache(maxsize=16)
def _encoder(code: CodeSpec):
    k, m = code.k, code.m
    if code.n - k != m:
        raise ValueError("non-encodable parity structure: n - k != number of checks")
    info_rows, par_rows, lower = [], [], True
    for c, vs in enumerate(code.rows):
        info_rows.append(vs[vs < k])
        p = vs[vs >= k] - k
        par_rows.append(p)
        lower &= p.size > 0 and p.max() == c
    step = _accumulator_step(par_rows)
    r = np.concatenate([np.full(len(v), c) for c, v in enumerate(info_rows)])
    Hs = sp.csr_matrix((np.ones(r.size, dtype=np.int64), (r, np.concatenate(info_rows))), shape=(m, k))
    if step:
        return "accumulate", Hs, step
    if lower:
        return "lower", Hs, [p[p < c] for c, p in enumerate(par_rows)]
    if m > 4096:
        raise ValueError("non-encodable parity structure: parity part is not triangular")
    Hp = np.zeros((m, m), dtype=np.uint8)
    for c, p in enumerate(par_rows):
        Hp[c, p] = 1
    inv = _gf2_inverse(Hp)
    if inv is None:
        raise ValueError("non-encodable parity structure: parity part is singular")
    return "dense", Hs, inv


def _accumulator_step(par_rows) -> int:
    """D if parity row c is {c} for c < D and {c-D, c} otherwise, else 0."""
    m = len(par_rows)
    first = [c for c, p in enumerate(par_rows) if p.size == 2]
    D = first[0] if first else m
    if m % D:
        return 0
    for c, p in enumerate(par_rows):
        want = [c] if c < D else [c - D, c]
        if p.tolist() != want:
            return 0
    return D


def _gf2_inverse(A: np.ndarray):
    m = A.shape[0]
    aug = np.concatenate([A.astype(bool), np.eye(m, dtype=bool)], axis=1)
    for col in range(m):
        piv = np.flatnonzero(aug[col:, col])
        if piv.size == 0:
            return None
        p = col + piv[0]
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        hit = np.flatnonzero(aug[:, col])
        hit = hit[hit != col]
        aug[hit] ^= aug[col]
    return aug[:, m:].astype(np.int64)


def ldpc_encode(message, code: CodeSpec) -> np.ndarray:
    message = np.asarray(message, dtype=np.int64).ravel()
    if message.size != code.k:
        raise ValueError(f"message length {message.size} != k = {code.k}")
    kind, Hs, extra = _encoder(code)
    syn = (Hs @ message) % 2
    if kind == "accumulate":
        parity = np.bitwise_xor.accumulate(syn.reshape(-1, extra), axis=0).ravel()
    elif kind == "lower":
        parity = np.zeros(code.m, dtype=np.int64)
        for c, prev in enumerate(extra):
            parity[c] = (syn[c] + parity[prev].sum()) % 2
    else:
        parity = (extra @ syn) % 2
    return np.concatenate([message, parity]).astype(np.uint8)


# ----------------------------------------------------------------- decoding

@lru_cache(maxsize=16)
def _graph(code: CodeSpec):
    var = np.concatenate(code.rows)
    deg = np.array([len(r) for r in code.rows])
    starts = np.concatenate([[0], np.cumsum(deg)[:-1]])
    check = np.repeat(np.arange(code.m), deg)
    return var, check, starts


@dataclass
class DecodeResult:
    bits: np.ndarray
    converged: bool
    iterations: int

    def __iter__(self):
        return iter((self.bits, self.converged))


def ldpc_decode(llr, code: CodeSpec, max_iters: int = 50, alpha: float = 0.75) -> DecodeResult:
    """Flooding normalized min-sum; returns message bits and a parity flag."""
    llr = np.nan_to_num(np.asarray(llr, dtype=float).ravel(), posinf=_LLR_CLIP, neginf=-_LLR_CLIP)
    if llr.size != code.n:
        raise ValueError(f"LLR length {llr.size} != n = {code.n}")
    llr = np.clip(llr, -_LLR_CLIP, _LLR_CLIP)
    var, check, starts = _graph(code)
    n_edges = var.size
    edge_idx = np.arange(n_edges)
    lq = llr[var]
    total = llr.copy()
    converged, it = False, 0
    for it in range(1, max_iters + 1):
        mag = np.abs(lq)
        neg = lq < 0
        min1 = np.minimum.reduceat(mag, starts)
        first = np.minimum.reduceat(np.where(mag == min1[check], edge_idx, n_edges), starts)
        mag2 = mag.copy()
        mag2[first] = np.inf
        min2 = np.minimum.reduceat(mag2, starts)
        parity = np.add.reduceat(neg.astype(np.int64), starts) & 1
        out_mag = min1[check]
        out_mag[first] = min2
        sign = np.where(neg ^ parity[check].astype(bool), -1.0, 1.0)
        lr = alpha * sign * out_mag
        total = llr + np.bincount(var, weights=lr, minlength=code.n)
        lq = total[var] - lr
        hard = (total < 0).astype(np.int64)
        if not (np.add.reduceat(hard[var], starts) & 1).any():
            converged = True
            break
    hard = (total < 0).astype(np.uint8)
    return DecodeResult(hard[: code.k], converged, it)


# ------------------------------------------------------------ shipped codes

@lru_cache(maxsize=None)
def shipped_code(n: int) -> CodeSpec:
    """Rate-1/2 code of length ``n``: the bundled alist if present, else the
    same construction generated on the fly."""
    name = f"qc_ira_n{n}.alist"
    ref = resources.files("otfs_hybrid") / "data" / "codes" / name
    if ref.is_file():
        with resources.as_file(ref) as p:
            return read_alist(p)
    return make_qc_ira(n, lifting_size(n))


def lifting_size(n: int) -> int:
    for Z in (256, 128, 64, 32, 16, 8, 4, 2, 1):
        if (n // 2) % Z == 0 and n // 2 // Z >= 3:
            return Z
    raise ValueError(f"no lifting size for n = {n}")
