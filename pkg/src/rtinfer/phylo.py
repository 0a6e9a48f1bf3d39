"""Dated-phylogeny ingestion and per-day slicing.

A dated binary tree enters as Newick text whose branch lengths are in the
model's time units. We then cut calendar time into day slices, most recent
first, and count for each slice the extant lineages A_n and coalescence
events C_n. Those two integer sequences are everything the inference ever
sees of the tree.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "DatedTree",
    "TreeSlices",
    "AlignedSlices",
    "NewickParseError",
    "UnsupportedTopologyError",
    "TipDateError",
    "parse_newick",
    "to_newick",
    "apply_tip_dates",
    "read_tip_dates",
    "discretize",
    "align_to_epidemic",
    "write_slices_csv",
    "read_slices_csv",
]


class NewickParseError(ValueError):
    """Malformed Newick input; carries the character offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at character {offset})")
        self.offset = offset


class UnsupportedTopologyError(NewickParseError):
    """Structurally valid Newick that is not a strictly binary tree."""


class TipDateError(ValueError):
    """Tip-date table inconsistent with the tree's branch-length dating."""


@dataclass
class DatedTree:
    """Binary tree with calendar times; index 0..n-1, parent -1 at the root.

    Leaves carry sampling times and labels; internal nodes carry coalescence
    times. Time increases toward the present.
    """

    times: np.ndarray
    parents: np.ndarray
    labels: list
    children: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        if not self.children:
            kids = [[] for _ in range(len(self.times))]
            for i, p in enumerate(self.parents):
                if p >= 0:
                    kids[p].append(i)
            self.children = [tuple(k) for k in kids]

    @property
    def n_nodes(self) -> int:
        return len(self.times)

    @property
    def root(self) -> int:
        roots = np.flatnonzero(self.parents < 0)
        if len(roots) != 1:
            raise ValueError(f"tree must have exactly one root, found {len(roots)}")
        return int(roots[0])

    @property
    def leaf_mask(self) -> np.ndarray:
        return np.array([len(k) == 0 for k in self.children], dtype=bool)

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_mask.sum())

    def validate(self):
        root = self.root
        leaf = self.leaf_mask
        for i, kids in enumerate(self.children):
            if len(kids) not in (0, 2):
                raise ValueError(f"node {i} has {len(kids)} children; tree must be binary")
            for k in kids:
                if not self.times[k] > self.times[i]:
                    raise ValueError(f"child {k} not strictly later than parent {i}")
        n_internal = self.n_nodes - self.n_leaves
        if self.n_leaves != n_internal + 1:
            raise ValueError("leaf count must be internal count + 1")
        if self.times[root] != self.times.min():
            raise ValueError("root must be the earliest node")

    def leaf_times(self) -> np.ndarray:
        return self.times[self.leaf_mask]

    def internal_times(self) -> np.ndarray:
        return self.times[~self.leaf_mask]


@dataclass
class TreeSlices:
    """Per-slice lineage counts a and coalescence counts c, slice 0 most recent."""

    a: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int64)
        self.c = np.asarray(self.c, dtype=np.int64)
        if self.a.shape != self.c.shape:
            raise ValueError("a and c must have equal length")
        if np.any(self.a < 0) or np.any(self.c < 0):
            raise ValueError("slice counts must be nonnegative")
        if np.any(self.c > np.maximum(self.a - 1, 0)):
            raise ValueError("c[n] exceeds a[n]-1; not a valid tree slicing")

    @property
    def n_slices(self) -> int:
        return len(self.a)


@dataclass
class AlignedSlices:
    """Tree counts re-indexed to epidemic days 1..N (index day-1).

    Slices predating day 1 are truncated; the dropped slice and event counts
    make that information loss visible.
    """

    a: np.ndarray
    c: np.ndarray
    dropped_slices: int = 0
    dropped_events: int = 0

    @property
    def n_days(self) -> int:
        return len(self.a)


# ---------------------------------------------------------------------------
# Newick parsing
# ---------------------------------------------------------------------------

_BARE_LABEL_END = set("(),:;[]'")


class _Node:
    __slots__ = ("label", "length", "children", "offset")

    def __init__(self, label, length, children, offset):
        self.label = label
        self.length = length
        self.children = children
        self.offset = offset


class _NewickReader:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def fail(self, message: str, offset: Optional[int] = None):
        raise NewickParseError(message, self.i if offset is None else offset)

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        return self.text[self.i] if self.i < len(self.text) else ""

    def read_label(self) -> Optional[str]:
        self.skip_ws()
        if self.peek() == "'":
            start = self.i
            self.i += 1
            out = []
            while True:
                if self.i >= len(self.text):
                    self.fail("unterminated quoted label", start)
                ch = self.text[self.i]
                if ch == "'":
                    if self.text[self.i + 1 : self.i + 2] == "'":  # doubled quote escape
                        out.append("'")
                        self.i += 2
                        continue
                    self.i += 1
                    return "".join(out)
                out.append(ch)
                self.i += 1
        start = self.i
        while self.i < len(self.text) and not self.text[self.i].isspace() and self.text[self.i] not in _BARE_LABEL_END:
            self.i += 1
        return self.text[start : self.i] if self.i > start else None

    def read_length(self) -> Optional[float]:
        self.skip_ws()
        if self.peek() != ":":
            return None
        self.i += 1
        self.skip_ws()
        start = self.i
        while self.i < len(self.text) and self.text[self.i] in "+-0123456789.eE":
            self.i += 1
        if self.i == start:
            self.fail("expected a branch length after ':'")
        try:
            return float(self.text[start : self.i])
        except ValueError:
            self.fail(f"invalid branch length {self.text[start:self.i]!r}", start)

    def read_subtree(self) -> _Node:
        self.skip_ws()
        offset = self.i
        if self.peek() == "(":
            self.i += 1
            children = [self.read_subtree()]
            self.skip_ws()
            while self.peek() == ",":
                self.i += 1
                children.append(self.read_subtree())
                self.skip_ws()
            if self.peek() != ")":
                self.fail("expected ',' or ')'")
            self.i += 1
            if len(children) != 2:
                raise UnsupportedTopologyError(
                    f"internal node has {len(children)} children; only strictly binary trees are supported",
                    offset,
                )
            label = self.read_label()
            length = self.read_length()
            return _Node(label, length, children, offset)
        label = self.read_label()
        if label is None:
            self.fail("expected a leaf label or '('")
        length = self.read_length()
        return _Node(label, length, [], offset)

    def parse(self) -> _Node:
        self.skip_ws()
        if self.i >= len(self.text):
            self.fail("empty input")
        node = self.read_subtree()
        self.skip_ws()
        if self.peek() != ";":
            self.fail("expected ';' terminating the tree")
        self.i += 1
        self.skip_ws()
        if self.i < len(self.text):
            self.fail("unexpected text after ';'")
        return node


def parse_newick(text: str, most_recent_tip_time: float) -> DatedTree:
    """Parse dated Newick into a DatedTree.

    Node times come from root-to-tip accumulation of branch lengths, shifted
    so the latest leaf sits at most_recent_tip_time. Every non-root branch
    must carry a strictly positive length; a length on the root is ignored.
    """
    top = _NewickReader(text).parse()

    times, parents, labels = [], [], []

    def build(node: _Node, parent: int, depth: float):
        if parent >= 0:
            if node.length is None:
                raise NewickParseError("missing branch length", node.offset)
            if not node.length > 0:
                raise NewickParseError(f"branch length must be positive, got {node.length}", node.offset)
            depth = depth + node.length
        idx = len(times)
        times.append(depth)
        parents.append(parent)
        labels.append(node.label)
        for ch in node.children:
            build(ch, idx, depth)

    build(top, -1, 0.0)
    depths = np.asarray(times)
    is_parent = np.zeros(len(times), dtype=bool)
    for p in parents:
        if p >= 0:
            is_parent[p] = True
    leaf_mask = ~is_parent
    shift = most_recent_tip_time - depths[leaf_mask].max()
    tree = DatedTree(depths + shift, np.asarray(parents), labels)
    tree.validate()
    return tree


def to_newick(tree: DatedTree) -> str:
    """Serialize a DatedTree back to Newick with full-precision branch lengths."""
    labels = tree.labels

    def fmt(i: int, parent: Optional[int]) -> str:
        kids = tree.children[i]
        if kids:
            inner = ",".join(fmt(k, i) for k in kids)
            core = f"({inner})"
        else:
            core = labels[i] if labels[i] is not None else f"n{i}"
        if parent is None:
            return core
        return f"{core}:{float(tree.times[i] - tree.times[parent])!r}"

    return fmt(tree.root, None) + ";"


# ---------------------------------------------------------------------------
# tip-date calibration
# ---------------------------------------------------------------------------


def read_tip_dates(path) -> dict:
    """Read a two-column CSV (label, decimal time); a header row is optional."""
    out = {}
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh)):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise TipDateError(f"{path}: row {row_no + 1} must have exactly two columns")
            label, value = row[0].strip(), row[1].strip()
            try:
                t = float(value)
            except ValueError:
                if row_no == 0:
                    continue  # header
                raise TipDateError(f"{path}: row {row_no + 1}: {value!r} is not a time")
            if label in out:
                raise TipDateError(f"{path}: duplicate label {label!r}")
            out[label] = t
    return out


def apply_tip_dates(tree: DatedTree, dates: dict, atol: float = 1e-6) -> DatedTree:
    """Recalibrate the calendar using dated tips.

    Branch lengths already fix every node up to one global shift; the table
    pins that shift. Entries must agree with each other within atol, since
    re-estimating node times from dates would be tree dating, which this tool
    does not do. The anchor is the most recently dated tip.
    """
    leaf_idx = {tree.labels[i]: i for i in np.flatnonzero(tree.leaf_mask)}
    unknown = [lab for lab in dates if lab not in leaf_idx]
    if unknown:
        raise TipDateError(f"tip-date labels not in tree: {sorted(unknown)}")
    if not dates:
        raise TipDateError("tip-date table is empty")
    shifts = {lab: t - tree.times[leaf_idx[lab]] for lab, t in dates.items()}
    anchor = max(dates, key=lambda lab: dates[lab])
    ref = shifts[anchor]
    for lab, s in shifts.items():
        if abs(s - ref) > atol:
            raise TipDateError(
                f"tip {lab!r} disagrees with branch-length dating by {abs(s - ref):.3g} time units"
            )
    return DatedTree(tree.times + ref, tree.parents.copy(), list(tree.labels))


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------


def discretize(
    tree: DatedTree,
    day_length: float = 1.0,
    present: Optional[float] = None,
    snap_atol: float = 1e-9,
) -> TreeSlices:
    """Count (A_n, C_n) per day slice, slice 0 being the most recent.

    Slice n covers (present - (n+1)*day_length, present - n*day_length]; an
    event exactly on a boundary belongs to the slice whose recent edge it is.
    A_n counts the lineages extant at the slice's recent boundary (a
    coalescence exactly at that instant has not merged yet for this count)
    plus the leaves sampled strictly inside the slice. Output stops at the
    root's slice.

    Node times within snap_atol of a slice boundary are treated as exactly on
    it. Tips sampled on a boundary come back from a Newick round trip with a
    few ulp of branch-sum noise, which would otherwise flip their slice.
    """
    if day_length <= 0:
        raise ValueError("day_length must be positive")
    if present is None:
        present = float(tree.times.max())
    if present < tree.times.max() - snap_atol:
        raise ValueError("present must not precede the latest node time")
    times = tree.times
    if snap_atol > 0:
        k = np.round((present - times) / day_length)
        boundary = present - k * day_length
        times = np.where(np.abs(times - boundary) <= snap_atol, boundary, times)
    leaf_t = times[tree.leaf_mask]
    int_t = times[~tree.leaf_mask]
    root_t = float(times.min())
    n_slices = int(np.floor((present - root_t) / day_length + snap_atol / day_length)) + 1
    a = np.zeros(n_slices, dtype=np.int64)
    c = np.zeros(n_slices, dtype=np.int64)
    for n in range(n_slices):
        hi = present - n * day_length
        lo = hi - day_length
        extant = int(np.sum(leaf_t >= hi)) - int(np.sum(int_t > hi))
        inside = int(np.sum((leaf_t > lo) & (leaf_t < hi)))
        a[n] = extant + inside
        c[n] = int(np.sum((int_t > lo) & (int_t <= hi)))
    return TreeSlices(a, c)


def align_to_epidemic(slices: TreeSlices, n_days: int) -> AlignedSlices:
    """Map days-from-present slices onto epidemic days 1..n_days.

    Epidemic day n gets slice n_days - n. Slices older than day 1 are
    dropped, with the loss counted; days more recent than tree coverage
    simply get (0, 0).
    """
    if n_days < 1:
        raise ValueError("n_days must be at least 1")
    a = np.zeros(n_days, dtype=np.int64)
    c = np.zeros(n_days, dtype=np.int64)
    for day in range(1, n_days + 1):
        s = n_days - day
        if s < slices.n_slices:
            a[day - 1] = slices.a[s]
            c[day - 1] = slices.c[s]
    dropped = max(0, slices.n_slices - n_days)
    dropped_events = int(slices.c[n_days:].sum()) if dropped else 0
    return AlignedSlices(a, c, dropped_slices=dropped, dropped_events=dropped_events)


# ---------------------------------------------------------------------------
# CSV round trip for slices
# ---------------------------------------------------------------------------


def write_slices_csv(slices: TreeSlices, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["days_from_present", "a", "c"])
        for n in range(slices.n_slices):
            w.writerow([n, int(slices.a[n]), int(slices.c[n])])


def read_slices_csv(path) -> TreeSlices:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["days_from_present", "a", "c"]:
        raise ValueError(f"{path}: expected header 'days_from_present,a,c'")
    body = [r for r in rows[1:] if r]
    days = [int(r[0]) for r in body]
    if days != list(range(len(body))):
        raise ValueError(f"{path}: days_from_present must be 0,1,2,... without gaps")
    a = np.array([int(r[1]) for r in body], dtype=np.int64)
    c = np.array([int(r[2]) for r in body], dtype=np.int64)
    return TreeSlices(a, c)
