"""Set partitions of variable indices as factor-structure models.

A model assigns each of the N observed variables to exactly one group;
groups of size >= 2 share a common latent factor, singletons are
independent.  A model is therefore a set partition of {1..N}, and the
number of candidate models in dimension N is the Bell number B_N.

Partitions are kept in a canonical form (groups sorted by size
descending, ties broken by smallest contained index) so that structural
equality is model equality and downstream tie-breaking is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

# Exhaustive enumeration is an oracle for desk-scale problems only;
# B_10 = 115 975 is the largest census we are willing to materialize.
MAX_ENUM_VARS = 10
# Bell triangle values stay below 2^63 up to B_25 = 4 638 590 332 229 999 353.
MAX_BELL_N = 25

Group = tuple[int, ...]


@dataclass(frozen=True)
class ModelPartition:
    """A partition of variables {1..n_vars} into factor groups.

    ``groups`` is always stored canonically: each group ascending, groups
    ordered by (size descending, smallest member ascending).  Construct
    through :func:`make_partition` or :meth:`from_groups` unless the
    input is already canonical.
    """

    n_vars: int
    groups: tuple[Group, ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for g in self.groups:
            if len(g) == 0:
                raise ValueError("empty group in partition")
            seen.update(g)
        if seen != set(range(1, self.n_vars + 1)):
            raise ValueError(
                f"groups {self.groups} do not partition 1..{self.n_vars}"
            )
        if self.groups != _canonical(self.groups):
            raise ValueError("groups not in canonical order; use make_partition")

    @classmethod
    def from_groups(cls, n_vars: int, groups) -> "ModelPartition":
        return make_partition(n_vars, groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def type_signature(self) -> tuple[int, ...]:
        """Sorted (non-increasing) group sizes, e.g. (3, 2, 1, 1)."""
        return tuple(len(g) for g in self.groups)

    def __str__(self) -> str:
        return partition_to_string(self)


def _canonical(groups) -> tuple[Group, ...]:
    gs = [tuple(sorted(g)) for g in groups]
    gs.sort(key=lambda g: (-len(g), g[0]))
    return tuple(gs)


def make_partition(n_vars: int, groups) -> ModelPartition:
    """Build a ModelPartition, canonicalizing group order."""
    return ModelPartition(n_vars, _canonical(groups))


def independence_partition(n_vars: int) -> ModelPartition:
    """The (1,1,...,1) model with every variable its own group."""
    return ModelPartition(n_vars, tuple((i,) for i in range(1, n_vars + 1)))


def bell_number(n: int) -> int:
    """Number of set partitions of n elements, via the Bell triangle.

    Exact integer arithmetic; guarded at n <= 25 so results stay within
    64-bit range for callers that downcast.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n > MAX_BELL_N:
        raise ValueError(f"n={n} exceeds the overflow guard ({MAX_BELL_N})")
    row = [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def enumerate_partitions(n_vars: int) -> list[ModelPartition]:
    """All set partitions of {1..n_vars}, canonical and duplicate-free.

    Each element in turn either joins an existing group or opens a new
    one, which enumerates every partition exactly once.
    """
    if n_vars < 1:
        raise ValueError("n_vars must be a positive integer")
    if n_vars > MAX_ENUM_VARS:
        raise ValueError(
            f"refusing to enumerate partitions for n_vars={n_vars}: "
            f"B_{n_vars} grows super-exponentially (guard at {MAX_ENUM_VARS})"
        )
    out: list[ModelPartition] = []
    blocks: list[list[int]] = []

    def place(i: int) -> None:
        if i > n_vars:
            out.append(make_partition(n_vars, blocks))
            return
        for b in blocks:
            b.append(i)
            place(i + 1)
            b.pop()
        blocks.append([i])
        place(i + 1)
        blocks.pop()

    place(1)
    return out


def merge_groups(p: ModelPartition, i: int, j: int) -> ModelPartition:
    """Union groups i and j (0-based positions in canonical order)."""
    g = p.n_groups
    if i == j:
        raise ValueError("cannot merge a group with itself")
    if not (0 <= i < g and 0 <= j < g):
        raise ValueError(f"group index out of range for {g}-group partition")
    merged = p.groups[i] + p.groups[j]
    rest = [grp for k, grp in enumerate(p.groups) if k not in (i, j)]
    return make_partition(p.n_vars, rest + [merged])


def successor_models(p: ModelPartition) -> list[ModelPartition]:
    """All partitions reachable by merging one pair of groups of ``p``.

    These are the candidates the forward search tests from incumbent
    ``p``; a g-group partition has exactly C(g,2) of them, and distinct
    pairs always yield distinct partitions.
    """
    return [merge_groups(p, i, j) for i, j in combinations(range(p.n_groups), 2)]


def max_forward_tests(n_vars: int) -> int:
    """Worst-case number of model fits in the forward search: 1 + C(N+1,3)."""
    if n_vars < 1:
        raise ValueError("n_vars must be a positive integer")
    return 1 + comb(n_vars + 1, 3)


def param_count(p: ModelPartition) -> int:
    """Free parameters of a partition model.

    One idiosyncratic rate per variable plus one factor rate per group
    of size >= 2.
    """
    return p.n_vars + sum(1 for g in p.groups if len(g) >= 2)


def partition_to_string(p: ModelPartition) -> str:
    """Render as ``[1 3 4 7][2 5 6]`` (canonical group order, 1-based)."""
    return "".join("[" + " ".join(str(v) for v in g) + "]" for g in p.groups)


def signature_to_string(sig: tuple[int, ...]) -> str:
    """Render a type signature as ``(4,3)``."""
    return "(" + ",".join(str(s) for s in sig) + ")"


def parse_partition(text: str, n_vars: int | None = None) -> ModelPartition:
    """Parse the ``[1 3][2]`` text form back into a ModelPartition.

    Group separators may be whitespace or commas.  ``n_vars`` defaults to
    the largest index mentioned, which only covers partitions without a
    gap; pass it explicitly when trailing variables exist.
    """
    text = text.strip()
    if not text:
        raise ValueError("empty partition string")
    groups: list[list[int]] = []
    cur: list[str] | None = None
    for ch in text:
        if ch == "[":
            if cur is not None:
                raise ValueError(f"nested '[' in partition string {text!r}")
            cur = []
        elif ch == "]":
            if cur is None:
                raise ValueError(f"unbalanced ']' in partition string {text!r}")
            tokens = "".join(cur).replace(",", " ").split()
            if not tokens:
                raise ValueError(f"empty group in partition string {text!r}")
            groups.append([int(t) for t in tokens])
            cur = None
        else:
            if cur is None:
                if not ch.isspace():
                    raise ValueError(f"unexpected {ch!r} outside groups in {text!r}")
            else:
                cur.append(ch)
    if cur is not None:
        raise ValueError(f"unterminated group in partition string {text!r}")
    if n_vars is None:
        n_vars = max(v for g in groups for v in g)
    return make_partition(n_vars, groups)
