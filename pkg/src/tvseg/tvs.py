"""Temporal adjacency structure inferred from pairwise same-motion judgments.

An oracle answers, for every consecutive frame pair, whether the two frames
depict the same motion.  The resulting bit sequence partitions the frames
into maximal runs; each frame's neighborhood is the rest of its run, and the
structure matrix G places -|N_i| on the diagonal and 1 on every neighbor
entry, so each row sums to zero.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import InvalidInputError, OracleUnavailableError


class Verdict(enum.Enum):
    SAME = "same"
    DIFFERENT = "different"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class Judgment:
    """One oracle answer: the parsed verdict plus raw material for the audit."""

    verdict: Verdict
    raw_text: str = ""
    score: float | None = None


@dataclass
class AuditRecord:
    """Provenance of one adjacency bit."""

    index: int
    verdict: int
    retries: int = 0
    source: str = "oracle"
    raw_text_hash: str = ""
    score: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self):
        out = {
            "index": self.index,
            "verdict": self.verdict,
            "retries": self.retries,
            "source": self.source,
            "raw_text_hash": self.raw_text_hash,
        }
        if self.score is not None:
            out["score"] = self.score
        if self.flags:
            out["flags"] = self.flags
        return out


@dataclass(frozen=True)
class AdjacencySequence:
    """N-1 same-motion bits for consecutive frame pairs, with per-bit audit."""

    eq: np.ndarray
    audit: tuple = ()

    def __post_init__(self):
        eq = np.asarray(self.eq, dtype=int)
        if eq.ndim != 1 or eq.size < 1:
            raise InvalidInputError("eq must be a nonempty 1-D bit vector")
        if not np.all((eq == 0) | (eq == 1)):
            raise InvalidInputError("eq entries must be 0 or 1")
        eq = eq.copy()
        eq.setflags(write=False)
        object.__setattr__(self, "eq", eq)
        object.__setattr__(self, "audit", tuple(self.audit))

    def __len__(self):
        return self.eq.size


@dataclass(frozen=True)
class TvsStructure:
    """Run bounds, per-frame neighborhoods, and (optionally) the matrix G."""

    bounds: np.ndarray          # N x 2, inclusive 0-indexed (l_i, r_i)
    neighborhoods: tuple        # N arrays of neighbor indices
    g: np.ndarray | None = None

    @property
    def frame_count(self) -> int:
        return self.bounds.shape[0]


@runtime_checkable
class AdjacencyOracle(Protocol):
    """Anything that can judge whether two frames depict the same motion.

    ``source`` labels audit records ("oracle", "simulated", or "file").
    ``strict=True`` re-asks with the terse single-token instruction.
    """

    source: str

    def judge(self, frame_a, frame_b, strict: bool = False) -> "Judgment":
        ...


class GroundTruthOracle:
    """Answers from a known adjacency sequence with seeded independent bit flips.

    Frame references must be the integer frame indices; the judgment for the
    pair (k, k+1) reads bit k.  Deterministic for a fixed seed.
    """

    source = "simulated"

    def __init__(self, eq_true, flip_probability=0.0, rng_seed=0):
        eq = np.asarray(eq_true.eq if isinstance(eq_true, AdjacencySequence) else eq_true)
        if not 0.0 <= flip_probability <= 1.0:
            raise InvalidInputError("flip probability must be in [0, 1]")
        rng = np.random.default_rng(rng_seed)
        self._eq = np.where(
            rng.random(eq.size) < flip_probability, 1 - eq, eq
        ).astype(int)
        self.pair_count = int(eq.size)

    def judge(self, frame_a, frame_b, strict=False):
        bit = int(self._eq[int(frame_a)])
        return Judgment(Verdict.SAME if bit else Verdict.DIFFERENT)


class ReplayOracle:
    """Answers replayed from a recorded adjacency sequence (e.g. a file)."""

    source = "file"

    def __init__(self, eq):
        self._eq = np.asarray(eq.eq if isinstance(eq, AdjacencySequence) else eq, dtype=int)
        self.pair_count = int(self._eq.size)

    def judge(self, frame_a, frame_b, strict=False):
        bit = int(self._eq[int(frame_a)])
        return Judgment(Verdict.SAME if bit else Verdict.DIFFERENT)


def _judge_pair(oracle, k, frame_a, frame_b):
    import hashlib

    try:
        judgment = oracle.judge(frame_a, frame_b)
        retries = 0
        flags = []
        if judgment.verdict is Verdict.AMBIGUOUS:
            judgment = oracle.judge(frame_a, frame_b, strict=True)
            retries = 1
            if judgment.verdict is Verdict.AMBIGUOUS:
                flags.append("ambiguous_twice")
    except OracleUnavailableError as exc:
        raise OracleUnavailableError(str(exc), pair_index=k) from exc

    if judgment.verdict is Verdict.SAME:
        bit = 1
    else:
        # A second ambiguous answer resolves to a cut: the smoothing
        # regularizer can heal a spurious cut inside a long run, while a
        # false merge would erase a true boundary.
        bit = 0
    record = AuditRecord(
        index=k,
        verdict=bit,
        retries=retries,
        source=getattr(oracle, "source", "oracle"),
        raw_text_hash=hashlib.sha256(judgment.raw_text.encode()).hexdigest()[:16],
        score=judgment.score,
        flags=flags,
    )
    return bit, record


def build_adjacency(oracle, frames, n_frames: int, max_parallel: int = 1) -> AdjacencySequence:
    """Query the oracle for every consecutive pair and assemble the bit sequence.

    An ambiguous answer triggers exactly one strict re-query; a second
    ambiguous answer resolves to 0 and is flagged in the audit.  Queries may
    run with bounded parallelism; results are reassembled in frame order, so
    the output does not depend on completion order.
    """
    if n_frames < 2:
        raise InvalidInputError("need at least two frames")
    frames = list(frames)
    if len(frames) != n_frames:
        raise InvalidInputError(f"expected {n_frames} frame references, got {len(frames)}")

    pairs = range(n_frames - 1)
    if max_parallel > 1:
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            results = list(
                pool.map(lambda k: _judge_pair(oracle, k, frames[k], frames[k + 1]), pairs)
            )
    else:
        results = [_judge_pair(oracle, k, frames[k], frames[k + 1]) for k in pairs]

    eq = np.array([bit for bit, _ in results], dtype=int)
    audit = tuple(record for _, record in results)
    return AdjacencySequence(eq=eq, audit=audit)


def neighborhoods_from_eq(eq) -> TvsStructure:
    """Run bounds and neighborhoods from the adjacency bits.

    Frame i's run [l_i, r_i] is the maximal stretch of consecutive frames
    joined to i by 1-bits; N_i is that run minus i itself.  All frames in a
    run share the same bounds.
    """
    bits = np.asarray(eq.eq if isinstance(eq, AdjacencySequence) else eq, dtype=int)
    if not np.all((bits == 0) | (bits == 1)):
        raise InvalidInputError("eq entries must be 0 or 1")
    n = bits.size + 1
    bounds = np.zeros((n, 2), dtype=int)
    neighborhoods = []
    # cut positions are the 0 bits; runs are the stretches between them
    cuts = np.flatnonzero(bits == 0)
    run_starts = np.concatenate(([0], cuts + 1))
    run_ends = np.concatenate((cuts, [n - 1]))
    for lo, hi in zip(run_starts, run_ends):
        members = np.arange(lo, hi + 1)
        for i in members:
            bounds[i] = (lo, hi)
            neighborhoods.append(members[members != i])
    return TvsStructure(bounds=bounds, neighborhoods=tuple(neighborhoods))


def tvs_matrix(structure: TvsStructure) -> np.ndarray:
    """Assemble G: G_ii = -|N_i|, G_ij = 1 for j in N_i, 0 elsewhere."""
    n = structure.frame_count
    g = np.zeros((n, n))
    for i, nbrs in enumerate(structure.neighborhoods):
        g[i, i] = -float(len(nbrs))
        if len(nbrs):
            g[i, np.asarray(nbrs, dtype=int)] = 1.0
    return g


def build_structure(eq) -> TvsStructure:
    """Neighborhoods plus the assembled G in one step."""
    structure = neighborhoods_from_eq(eq)
    return TvsStructure(
        bounds=structure.bounds,
        neighborhoods=structure.neighborhoods,
        g=tvs_matrix(structure),
    )


def neighborhoods_from_matrix(g: np.ndarray) -> tuple:
    """Recover neighborhoods from a structure matrix: off-diagonal positive entries."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    off = g.copy()
    np.fill_diagonal(off, 0.0)
    return tuple(np.flatnonzero(off[i] > 0.0) for i in range(n))


def eq_from_structure(structure: TvsStructure) -> np.ndarray:
    """Adjacency bits implied by run bounds: 1 iff k and k+1 share a run."""
    bounds = structure.bounds
    n = bounds.shape[0]
    return np.array(
        [1 if bounds[k, 1] >= k + 1 else 0 for k in range(n - 1)], dtype=int
    )


def flip_adjacency(eq_true, p: float, rng_seed: int = 0) -> AdjacencySequence:
    """Independently flip each bit with probability ``p``; seeded and audited."""
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"flip probability must be in [0, 1], got {p}")
    bits = np.asarray(eq_true.eq if isinstance(eq_true, AdjacencySequence) else eq_true, dtype=int)
    rng = np.random.default_rng(rng_seed)
    flips = rng.random(bits.size) < p
    noisy = np.where(flips, 1 - bits, bits)
    audit = tuple(
        AuditRecord(
            index=int(k),
            verdict=int(noisy[k]),
            source="simulated",
            flags=(["flipped"] if flips[k] else []),
        )
        for k in range(bits.size)
    )
    return AdjacencySequence(eq=noisy, audit=audit)


def boundary_error_count(eq_true, eq_noisy) -> int:
    """Number of cut positions (0-bits) present in exactly one of the two sequences."""
    a = np.asarray(eq_true.eq if isinstance(eq_true, AdjacencySequence) else eq_true, dtype=int)
    b = np.asarray(eq_noisy.eq if isinstance(eq_noisy, AdjacencySequence) else eq_noisy, dtype=int)
    if a.shape != b.shape:
        raise InvalidInputError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.sum((a == 0) ^ (b == 0)))
