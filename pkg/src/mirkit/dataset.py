"""Split files, train/eval length adjustment and split-hygiene audits."""

from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import as_mono_array
from .errors import InputParseError, PreconditionError

GTZAN_GENRES = [
    "blues", "classical", "country", "disco", "hiphop",
    "jazz", "metal", "pop", "reggae", "rock",
]

SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class SplitEntry:
    relative_path: str
    label_name: str
    label_index: int
    artist_id: str | None = None
    group_id: str | None = None

    def key(self, name: str) -> str | None:
        if name in ("artist", "artist_id"):
            return self.artist_id
        if name in ("group", "group_id"):
            return self.group_id
        raise PreconditionError(f"unknown grouping key {name!r}; use 'artist' or 'group'")


@dataclass(frozen=True)
class SplitManifest:
    entries: tuple[SplitEntry, ...]
    vocabulary: tuple[str, ...] = tuple(GTZAN_GENRES)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        seen = set()
        for e in self.entries:
            if e.relative_path in seen:
                raise PreconditionError(f"duplicate path in split: {e.relative_path}")
            seen.add(e.relative_path)
            if self.vocabulary[e.label_index] != e.label_name:
                raise PreconditionError(f"{e.relative_path}: label index disagrees with vocabulary")

    def __len__(self):
        return len(self.entries)

    def label_counts(self) -> np.ndarray:
        counts = np.zeros(len(self.vocabulary), dtype=np.int64)
        for e in self.entries:
            counts[e.label_index] += 1
        return counts


@dataclass(frozen=True)
class ChunkPlan:
    num_samples: int
    num_chunks: int = 1
    mode: str = "eval-stacked"  # or "train-random-crop"

    def __post_init__(self):
        if self.num_samples < 1 or self.num_chunks < 1:
            raise PreconditionError("num_samples and num_chunks must be >= 1")
        if self.mode not in ("train-random-crop", "eval-stacked"):
            raise PreconditionError(f"unknown chunk mode {self.mode!r}")


def parse_split_file(text: str, vocabulary=GTZAN_GENRES) -> SplitManifest:
    """Parse ``<label>/<filename>`` lines; the label is everything before the first '/'."""
    vocab = list(vocabulary)
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if "/" not in line:
            raise InputParseError(f"line {lineno}: expected '<label>/<filename>', got {line!r}")
        label = line.split("/")[0]
        if label not in vocab:
            raise InputParseError(f"line {lineno}: label {label!r} is not in the vocabulary")
        entries.append(SplitEntry(line, label, vocab.index(label)))
    return SplitManifest(entries, vocab)


def serialize_split(manifest: SplitManifest) -> str:
    return "".join(e.relative_path + "\n" for e in manifest.entries)


def serialize_sidecar(manifest: SplitManifest) -> str:
    """Tab-separated ``path, label, artist, group``; missing keys are empty fields."""
    return "".join(
        f"{e.relative_path}\t{e.label_name}\t{e.artist_id or ''}\t{e.group_id or ''}\n"
        for e in manifest.entries
    )


def parse_sidecar(text: str) -> dict[str, tuple[str, str | None, str | None]]:
    """Map path -> (label, artist, group) from sidecar TSV text."""
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) < 2 or len(fields) > 4:
            raise InputParseError(f"sidecar line {lineno}: expected 2-4 tab-separated fields")
        fields += [""] * (4 - len(fields))
        path, label, artist, group = (f.strip() for f in fields)
        rows[path] = (label, artist or None, group or None)
    return rows


def attach_sidecar(manifest: SplitManifest, sidecar: dict) -> SplitManifest:
    entries = []
    for e in manifest.entries:
        if e.relative_path in sidecar:
            _label, artist, group = sidecar[e.relative_path]
            e = replace(e, artist_id=artist, group_id=group)
        entries.append(e)
    return SplitManifest(entries, manifest.vocabulary)


def manifest_from_sidecar(text: str, vocabulary=None) -> SplitManifest:
    """Build a manifest straight from a sidecar TSV (used as the make-split input)."""
    rows = parse_sidecar(text)
    if vocabulary is None:
        labels = {label for label, _, _ in rows.values()}
        vocabulary = GTZAN_GENRES if labels <= set(GTZAN_GENRES) else sorted(labels)
    vocab = list(vocabulary)
    entries = []
    for path, (label, artist, group) in rows.items():
        if label not in vocab:
            raise InputParseError(f"{path}: label {label!r} is not in the vocabulary")
        entries.append(SplitEntry(path, label, vocab.index(label), artist, group))
    return SplitManifest(entries, vocab)


def chunk_offsets(length: int, plan: ChunkPlan) -> list[int]:
    """Start offsets for eval chunks: ``i * ((length - num_samples) // num_chunks)``.

    Samples past the last chunk are dropped.
    """
    if length < plan.num_samples:
        raise PreconditionError(f"signal of {length} samples is shorter than {plan.num_samples}")
    hop = (length - plan.num_samples) // plan.num_chunks
    return [i * hop for i in range(plan.num_chunks)]


def adjust_audio_length(x, plan: ChunkPlan, rng: np.random.Generator | None = None) -> np.ndarray:
    """Random crop of ``num_samples`` (train) or a ``(num_chunks, num_samples)`` stack (eval)."""
    y = as_mono_array(x)
    if len(y) < plan.num_samples:
        raise PreconditionError(f"signal of {len(y)} samples is shorter than {plan.num_samples}")
    if plan.mode == "train-random-crop":
        if rng is None:
            raise PreconditionError("train mode needs an rng")
        offset = int(rng.integers(0, len(y) - plan.num_samples + 1))
        return y[offset:offset + plan.num_samples].copy()
    return np.stack([y[o:o + plan.num_samples] for o in chunk_offsets(len(y), plan)])


@dataclass(frozen=True)
class LeakFinding:
    key: str
    splits: tuple[str, ...]

    def as_dict(self) -> dict:
        return {"key": self.key, "splits": list(self.splits)}


def check_leakage(splits: dict[str, SplitManifest], key: str = "artist") -> list[LeakFinding]:
    """Key values (artist or group ids) that occur in more than one split."""
    where = defaultdict(set)
    for name, manifest in splits.items():
        for e in manifest.entries:
            value = e.key(key)
            if value is None:
                raise PreconditionError(f"{name}: entry {e.relative_path} has no {key} id")
            where[value].add(name)
    order = {name: i for i, name in enumerate(splits)}
    return [
        LeakFinding(value, tuple(sorted(names, key=order.get)))
        for value, names in sorted(where.items())
        if len(names) > 1
    ]


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def distribution_divergence(splits: dict[str, SplitManifest]) -> dict[str, float]:
    """Total-variation distance between normalised label histograms, per split pair ``a:b``."""
    hists = {}
    vocab = None
    for name, manifest in splits.items():
        if vocab is None:
            vocab = manifest.vocabulary
        elif manifest.vocabulary != vocab:
            raise PreconditionError("splits must share a label vocabulary")
        counts = manifest.label_counts()
        if counts.sum() == 0:
            raise PreconditionError(f"split {name!r} is empty")
        hists[name] = counts / counts.sum()
    return {f"{a}:{b}": total_variation(hists[a], hists[b]) for a, b in itertools.combinations(hists, 2)}


@dataclass
class StratifiedSplit:
    train: SplitManifest
    valid: SplitManifest
    test: SplitManifest
    imbalance: list = field(default_factory=list)

    def as_dict(self) -> dict[str, SplitManifest]:
        return {"train": self.train, "valid": self.valid, "test": self.test}


def stratified_split(manifest: SplitManifest, fractions=(0.7, 0.2, 0.1), group_key: str | None = None,
                     seed: int = 0) -> StratifiedSplit:
    """Label-stratified three-way split that never splits a group.

    Groups (or single items when ``group_key`` is None) are placed largest
    first, with a seeded shuffle among equal sizes. Each goes to the split
    whose per-label deficit it reduces most; ties go to the earlier split.
    Per-label counts that end up more than one item away from their target
    are listed in ``imbalance``.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise PreconditionError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    n_labels = len(manifest.vocabulary)
    label_totals = manifest.label_counts()
    targets = fr[:, np.newaxis] * label_totals[np.newaxis, :]  # (3, labels)

    groups = defaultdict(list)
    for i, e in enumerate(manifest.entries):
        if group_key is None:
            groups[("item", i)].append(i)
        else:
            value = e.key(group_key)
            if value is None:
                raise PreconditionError(f"entry {e.relative_path} has no {group_key} id")
            groups[("group", value)].append(i)

    capacity = targets.sum(axis=1).max()
    group_list = list(groups.values())
    for members in group_list:
        if len(members) > capacity + 1e-9:
            raise PreconditionError(
                f"a group of {len(members)} items exceeds the largest target split ({capacity:g} items)"
            )

    rng = np.random.default_rng(seed)
    shuffled = [group_list[i] for i in rng.permutation(len(group_list))]
    shuffled.sort(key=len, reverse=True)  # stable: shuffle order kept within equal sizes

    current = np.zeros((3, n_labels))
    assigned = [[] for _ in range(3)]
    for members in shuffled:
        vec = np.zeros(n_labels)
        for i in members:
            vec[manifest.entries[i].label_index] += 1
        deficit = targets - current
        score = (deficit * vec).sum(axis=1) / vec.sum()
        best = int(np.argmax(score))
        current[best] += vec
        assigned[best].extend(members)

    manifests = [
        SplitManifest([manifest.entries[i] for i in sorted(idx)], manifest.vocabulary) for idx in assigned
    ]
    imbalance = []
    for s, name in enumerate(SPLIT_NAMES):
        for c in range(n_labels):
            if abs(current[s, c] - targets[s, c]) > 1 + 1e-9:
                imbalance.append({
                    "split": name,
                    "label": manifest.vocabulary[c],
                    "count": int(current[s, c]),
                    "target": float(targets[s, c]),
                })
    return StratifiedSplit(*manifests, imbalance=imbalance)


def label_histogram(manifest: SplitManifest) -> dict[str, int]:
    counts = Counter(e.label_name for e in manifest.entries)
    return {label: counts.get(label, 0) for label in manifest.vocabulary}
