"""Training-free recall tasks over a 128-token vocabulary.

Associative-recall instances lay out n key/value pairs, optional padding, a
separator, and the shuffled queries:

    [k1 v1 k2 v2 ... kn vn  PAD...  SEP  k_s(1) ... k_s(n)]

with keys drawn without replacement from the key range, values drawn from the
value range, SEP the last vocabulary id, and PAD the id just below it.  The
copy task is [first half, second half, SEP] with the second half as targets.
Instances serialise one per line as seed|n|tokens|query positions|targets.

The recall experiments skip any learned machinery: tokens are embedded as
unit d_h-vectors handed directly to the kernels as feature-space keys and
queries (a strictly positive feature map cannot represent mutually
orthogonal keys, so featurising the embeddings would change the geometry
under test).  A query's output is scored against the whole value-token
embedding table by cosine; an experiment reports exact-match accuracy and
the mean margin between the correct value and the best wrong one.  Keys are
orthonormal (QR of seeded Gaussians) or independent random unit vectors.
Experiments address keys beyond the instance-token layout so overload points
larger than the key vocabulary remain expressible.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import mean
from typing import Optional, Sequence

import numpy as np

from .config import HeadConfig
from .kernels import make_head

__all__ = [
    "VOCAB",
    "KEY_RANGE",
    "VALUE_RANGE",
    "PAD_TOKEN",
    "SEP_TOKEN",
    "InfeasibleGeometryError",
    "MqarInstance",
    "CopyInstance",
    "gen_mqar",
    "gen_copy",
    "RecallResult",
    "recall_experiment",
    "capacity_curve",
    "long_context_curve",
    "summarize_results",
    "score_retrieval",
]

VOCAB = 128
KEY_RANGE = (0, 64)
VALUE_RANGE = (64, 126)
SEP_TOKEN = 127
PAD_TOKEN = 126

GEOMETRIES = ("orthonormal", "random-unit")


class InfeasibleGeometryError(ValueError):
    pass


def _ints(text: str) -> list[int]:
    text = text.strip()
    return [int(x) for x in text.split()] if text else []


@dataclass
class MqarInstance:
    tokens: list[int]
    query_positions: list[int]
    targets: list[int]
    n_pairs: int
    seed: int

    @property
    def total_len(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        n = self.n_pairs
        toks = self.tokens
        if len(self.query_positions) != n or len(self.targets) != n:
            raise ValueError("need one query position and target per pair")
        if len(toks) < 3 * n + 1:
            raise ValueError(f"{len(toks)} tokens cannot hold {n} pairs")
        keys = toks[0 : 2 * n : 2]
        values = toks[1 : 2 * n : 2]
        if len(set(keys)) != n:
            raise ValueError("context keys must be distinct")
        if any(not KEY_RANGE[0] <= k < KEY_RANGE[1] for k in keys):
            raise ValueError("context key outside the key range")
        if any(not VALUE_RANGE[0] <= v < VALUE_RANGE[1] for v in values):
            raise ValueError("context value outside the value range")
        sep_at = len(toks) - self.n_pairs - 1
        if toks[sep_at] != SEP_TOKEN:
            raise ValueError("separator missing before the queries")
        if any(tok != PAD_TOKEN for tok in toks[2 * n : sep_at]):
            raise ValueError("non-pad token in the padding span")
        lookup = dict(zip(keys, values))
        for pos, target in zip(self.query_positions, self.targets):
            if not sep_at < pos < len(toks):
                raise ValueError("query position outside the query span")
            if lookup.get(toks[pos]) != target:
                raise ValueError("target does not match the queried key")

    def to_line(self) -> str:
        return "|".join(
            (
                str(self.seed),
                str(self.n_pairs),
                " ".join(map(str, self.tokens)),
                " ".join(map(str, self.query_positions)),
                " ".join(map(str, self.targets)),
            )
        )

    @classmethod
    def from_line(cls, line: str) -> "MqarInstance":
        seed, n, tokens, positions, targets = line.rstrip("\n").split("|")
        return cls(
            tokens=_ints(tokens),
            query_positions=_ints(positions),
            targets=_ints(targets),
            n_pairs=int(n),
            seed=int(seed),
        )


@dataclass
class CopyInstance:
    tokens: list[int]
    targets: list[int]
    half_len: int
    seed: int

    def validate(self) -> None:
        half = self.half_len
        if len(self.tokens) != 2 * half + 1:
            raise ValueError("copy instance must have 2 * half_len + 1 tokens")
        if self.tokens[-1] != SEP_TOKEN:
            raise ValueError("copy instance must end with the separator")
        if self.targets != self.tokens[half : 2 * half]:
            raise ValueError("targets must repeat the second half")

    def to_line(self) -> str:
        return "|".join(
            (
                str(self.seed),
                str(self.half_len),
                " ".join(map(str, self.tokens)),
                "",
                " ".join(map(str, self.targets)),
            )
        )

    @classmethod
    def from_line(cls, line: str) -> "CopyInstance":
        seed, half, tokens, _, targets = line.rstrip("\n").split("|")
        return cls(
            tokens=_ints(tokens),
            targets=_ints(targets),
            half_len=int(half),
            seed=int(seed),
        )


def gen_mqar(
    n_pairs: int,
    total_len: Optional[int] = None,
    vocab: int = VOCAB,
    key_range: tuple[int, int] = KEY_RANGE,
    value_range: tuple[int, int] = VALUE_RANGE,
    seed: int = 0,
) -> MqarInstance:
    """One associative-recall instance; layout invariants hold by construction."""
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    if n_pairs > key_range[1] - key_range[0]:
        raise ValueError(
            f"{n_pairs} distinct keys do not fit the key range {key_range}"
        )
    if not (0 <= key_range[0] < key_range[1] <= vocab - 2):
        raise ValueError("key range must avoid the reserved pad and separator ids")
    if not (0 <= value_range[0] < value_range[1] <= vocab - 2):
        raise ValueError("value range must avoid the reserved pad and separator ids")
    if max(key_range[0], value_range[0]) < min(key_range[1], value_range[1]):
        raise ValueError("key range and value range must be disjoint")
    base = 3 * n_pairs + 1
    if total_len is None:
        total_len = base
    if total_len < base:
        raise ValueError(f"total_len {total_len} cannot hold {n_pairs} pairs")
    rng = np.random.default_rng(seed)
    keys = rng.choice(np.arange(*key_range), size=n_pairs, replace=False)
    values = rng.integers(value_range[0], value_range[1], size=n_pairs)
    perm = rng.permutation(n_pairs)
    tokens: list[int] = []
    for k, v in zip(keys, values):
        tokens += [int(k), int(v)]
    tokens += [PAD_TOKEN] * (total_len - base)
    tokens.append(SEP_TOKEN)
    query_start = len(tokens)
    tokens += [int(keys[i]) for i in perm]
    inst = MqarInstance(
        tokens=tokens,
        query_positions=list(range(query_start, query_start + n_pairs)),
        targets=[int(values[i]) for i in perm],
        n_pairs=n_pairs,
        seed=seed,
    )
    inst.validate()
    return inst


def gen_copy(half_len: int, vocab: int = VOCAB, seed: int = 0) -> CopyInstance:
    if half_len < 1:
        raise ValueError("need at least one token per half")
    rng = np.random.default_rng(seed)
    body = rng.integers(0, vocab - 2, size=2 * half_len)
    tokens = [int(x) for x in body] + [SEP_TOKEN]
    inst = CopyInstance(
        tokens=tokens,
        targets=tokens[half_len : 2 * half_len],
        half_len=half_len,
        seed=seed,
    )
    inst.validate()
    return inst


@dataclass
class RecallResult:
    kernel: str
    n_pairs: int
    d_h: int
    geometry: str
    seed: int
    total_len: int
    accuracy: float
    per_query_margin: float


def _embeddings(d_h: int, n_pairs: int, geometry: str, seed: int):
    """Deterministic embedding set for one experiment seed.

    Draw order is fixed (value table, pad, sep, keys, targets, permutation)
    so every kernel sees the identical instance at a given seed.
    """
    if geometry not in GEOMETRIES:
        raise ValueError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    rng = np.random.default_rng(seed)
    n_values = VALUE_RANGE[1] - VALUE_RANGE[0]
    value_table = rng.standard_normal((n_values, d_h))
    value_table /= np.linalg.norm(value_table, axis=1, keepdims=True)
    pad_vec = rng.standard_normal(d_h)
    pad_vec /= np.linalg.norm(pad_vec)
    sep_vec = rng.standard_normal(d_h)
    sep_vec /= np.linalg.norm(sep_vec)
    raw = rng.standard_normal((d_h, n_pairs))
    if geometry == "orthonormal":
        if n_pairs > d_h:
            raise InfeasibleGeometryError(
                f"{n_pairs} orthonormal keys do not fit in dimension {d_h}"
            )
        q, r = np.linalg.qr(raw)
        keys = (q * np.sign(np.diag(r))).T
    else:
        keys = (raw / np.linalg.norm(raw, axis=0, keepdims=True)).T
    target_idx = rng.integers(0, n_values, size=n_pairs)
    perm = rng.permutation(n_pairs)
    return value_table, pad_vec, sep_vec, keys, target_idx, perm


def score_retrieval(o: np.ndarray, value_table: np.ndarray, target_idx: int):
    """Cosine-score an output against the value table.

    Returns (hit, margin): hit is exact match of the argmax entry (ties going
    to the lowest index, so a zero output lands on entry 0), margin is the
    correct cosine minus the best wrong cosine.
    """
    o = np.asarray(o, dtype=float)
    norm = np.linalg.norm(o)
    scores = value_table @ o / norm if norm > 0 else np.zeros(len(value_table))
    best = int(np.argmax(scores))
    others = np.delete(scores, target_idx)
    margin = float(scores[target_idx] - others.max())
    return best == int(target_idx), margin


def recall_experiment(
    kernel: str,
    cfg: HeadConfig,
    n_pairs: int,
    key_geometry: str = "orthonormal",
    seed: int = 0,
    total_len: Optional[int] = None,
    write_pads: bool = True,
    beta: float = 0.9,
) -> RecallResult:
    """Write n pairs (plus pads and separator), query every key, score.

    The write order mirrors the instance layout: pairs in presentation
    order, then pad self-associations (skipped if write_pads is off), then
    the separator, then pure reads in shuffled query order.
    """
    base = 3 * n_pairs + 1
    if total_len is None:
        total_len = base
    if total_len < base:
        raise ValueError(f"total_len {total_len} cannot hold {n_pairs} pairs")
    value_table, pad_vec, sep_vec, keys, target_idx, perm = _embeddings(
        cfg.d_h, n_pairs, key_geometry, seed
    )
    # Orthonormal embeddings are built directly in feature space (the
    # positive feature map admits no orthogonal image vectors); random-unit
    # embeddings are raw and pass through the kernel's feature map.
    pf = key_geometry == "orthonormal"
    head = make_head(kernel, cfg, beta)
    for i in range(n_pairs):
        head.write(keys[i], value_table[target_idx[i]], pre_featured=pf)
    if write_pads:
        for _ in range(total_len - base):
            head.write(pad_vec, pad_vec, pre_featured=pf)
    head.write(sep_vec, sep_vec, pre_featured=pf)
    hits = 0
    margins = []
    for qi in perm:
        o = head.read(keys[qi], pre_featured=pf)
        hit, margin = score_retrieval(o, value_table, int(target_idx[qi]))
        hits += hit
        margins.append(margin)
    return RecallResult(
        kernel=kernel,
        n_pairs=n_pairs,
        d_h=cfg.d_h,
        geometry=key_geometry,
        seed=seed,
        total_len=total_len,
        accuracy=hits / n_pairs,
        per_query_margin=mean(margins),
    )


def _run_cells(cells, workers: int):
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda f: f(), cells))
    return [f() for f in cells]


def capacity_curve(
    kernels: Sequence[str],
    cfg: HeadConfig,
    n_list: Sequence[int],
    seeds: Sequence[int],
    key_geometry: str = "orthonormal",
    write_pads: bool = True,
    beta: float = 0.9,
    workers: int = 1,
) -> list[RecallResult]:
    """Accuracy against pair count for each kernel, one cell per seed."""
    cells = [
        (
            lambda kind=kind, n=n, s=s: recall_experiment(
                kind, cfg, n, key_geometry, s, write_pads=write_pads, beta=beta
            )
        )
        for kind in kernels
        for n in n_list
        for s in seeds
    ]
    return _run_cells(cells, workers)


def long_context_curve(
    kernels: Sequence[str],
    cfg: HeadConfig,
    n_pairs: int,
    t_list: Sequence[int],
    seeds: Sequence[int],
    key_geometry: str = "orthonormal",
    write_pads: bool = True,
    beta: float = 0.9,
    workers: int = 1,
) -> list[RecallResult]:
    """Accuracy against padded context length at a fixed pair count."""
    cells = [
        (
            lambda kind=kind, t=t, s=s: recall_experiment(
                kind,
                cfg,
                n_pairs,
                key_geometry,
                s,
                total_len=t,
                write_pads=write_pads,
                beta=beta,
            )
        )
        for kind in kernels
        for t in t_list
        for s in seeds
    ]
    return _run_cells(cells, workers)


def summarize_results(results: Sequence[RecallResult], by: Sequence[str] = ("kernel", "n_pairs")):
    """Aggregate cells into mean/std rows keyed by the given fields."""
    groups: dict[tuple, list[RecallResult]] = {}
    for r in results:
        key = tuple(getattr(r, f) for f in by)
        groups.setdefault(key, []).append(r)
    rows = []
    for key, group in groups.items():
        accs = np.array([g.accuracy for g in group])
        row = dict(zip(by, key))
        row["mean_accuracy"] = float(accs.mean())
        row["std_accuracy"] = float(accs.std())
        row["cells"] = len(group)
        rows.append(row)
    return rows
