"""Extended-integer signatures and the poset operations built on them.

A *part* is an ``int`` or one of the two infinities :data:`INF` and
:data:`NEG_INF`.  A finite signature is a plain weakly decreasing tuple of
parts.  A bi-infinite signature is stored as a :class:`WindowSignature`: a
finite window plus a constant fill on each side.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence, Union


class Infinity(enum.Enum):
    """The two points at infinity of the extended integers."""

    NEG = -1
    POS = 1

    def _key(self, other):
        if isinstance(other, Infinity):
            return other.value
        if isinstance(other, int):
            return 0
        return NotImplemented

    def __lt__(self, other):
        k = self._key(other)
        return NotImplemented if k is NotImplemented else self.value < k

    def __le__(self, other):
        k = self._key(other)
        return NotImplemented if k is NotImplemented else self.value <= k

    def __gt__(self, other):
        k = self._key(other)
        return NotImplemented if k is NotImplemented else self.value > k

    def __ge__(self, other):
        k = self._key(other)
        return NotImplemented if k is NotImplemented else self.value >= k

    def __neg__(self):
        return Infinity.NEG if self is Infinity.POS else Infinity.POS

    def __repr__(self):
        return "inf" if self is Infinity.POS else "-inf"

    __str__ = __repr__


INF = Infinity.POS
NEG_INF = Infinity.NEG

Part = Union[int, Infinity]


def is_finite(x: Part) -> bool:
    return not isinstance(x, Infinity)


def ext_sub(a: Part, b: Part) -> Part:
    """``a - b`` for ``a >= b`` with inf - inf = (-inf) - (-inf) = 0."""
    if a < b:
        raise ValueError(f"ext_sub needs a >= b, got {a!r} - {b!r}")
    if a == b:
        return 0
    if isinstance(a, Infinity) or isinstance(b, Infinity):
        return INF
    return a - b


def parse_part(x) -> Part:
    """Accept ints, the strings ``"inf"``/``"-inf"``, float infinities or parts."""
    if isinstance(x, Infinity):
        return x
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return INF
        if s in ("-inf", "-infinity"):
            return NEG_INF
        return int(s)
    if isinstance(x, float):
        if x == float("inf"):
            return INF
        if x == float("-inf"):
            return NEG_INF
        if not x.is_integer():
            raise ValueError(f"non-integer part {x}")
        return int(x)
    return int(x)


def part_to_json(x: Part):
    if x is INF:
        return "inf"
    if x is NEG_INF:
        return "-inf"
    return int(x)


def as_signature(parts: Iterable) -> tuple:
    """Validate and normalize a finite signature."""
    sig = tuple(parse_part(x) for x in parts)
    for a, b in zip(sig, sig[1:]):
        if a < b:
            raise ValueError(f"signature not weakly decreasing: {sig!r}")
    return sig


def signature_to_json(sig: Sequence[Part]) -> list:
    return [part_to_json(x) for x in sig]


@dataclass(frozen=True)
class WindowSignature:
    """Bi-infinite signature equal to ``left`` below the window and ``right`` above.

    ``window[j]`` sits at index ``offset + j``.  Instances are kept in a
    canonical form (window entries equal to the adjacent fill are stripped),
    so equality and hashing compare the represented sequences.
    """

    offset: int
    window: tuple
    left: Part = INF
    right: Part = NEG_INF

    def __post_init__(self):
        left, right = parse_part(self.left), parse_part(self.right)
        win = list(as_signature(self.window))
        off = int(self.offset)
        if win and (win[0] > left or win[-1] < right):
            raise ValueError("window inconsistent with fills")
        if left < right:
            raise ValueError("left fill below right fill")
        while win and win[0] == left:
            win.pop(0)
            off += 1
        while win and win[-1] == right:
            win.pop()
        if not win and left == right:
            off = 0
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "window", tuple(win))
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __getitem__(self, i: int) -> Part:
        j = i - self.offset
        if j < 0:
            return self.left
        if j >= len(self.window):
            return self.right
        return self.window[j]

    @property
    def lo(self) -> int:
        return self.offset

    @property
    def hi(self) -> int:
        """One past the last window index."""
        return self.offset + len(self.window)

    def values(self, lo: int, hi: int) -> tuple:
        return tuple(self[i] for i in range(lo, hi))

    def shift(self, k: int = 1) -> "WindowSignature":
        """Apply the forward shift ``k`` times: the result at ``n`` is ``self[n + k]``."""
        return WindowSignature(self.offset - k, self.window, self.left, self.right)

    def to_json(self) -> dict:
        return {
            "offset": self.offset,
            "window": signature_to_json(self.window),
            "left": part_to_json(self.left),
            "right": part_to_json(self.right),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WindowSignature":
        return cls(int(obj.get("offset", 0)), tuple(obj.get("window", ())),
                   obj.get("left", "inf"), obj.get("right", "-inf"))

    def __repr__(self):
        return (f"WindowSignature(offset={self.offset}, window={self.window!r}, "
                f"left={self.left!r}, right={self.right!r})")


def flat(a: Part) -> WindowSignature:
    """The constant signature ``(a)_{i in Z}``."""
    return WindowSignature(0, (), a, a)


def iota(sig: Sequence[Part]) -> WindowSignature:
    """Embed ``(l_1..l_N)`` with +inf at indices <= 0 and -inf beyond N."""
    return WindowSignature(1, as_signature(sig), INF, NEG_INF)


def common_span(*ws: WindowSignature) -> tuple[int, int]:
    nonempty = [w for w in ws if w.window or w.left != w.right]
    if not nonempty:
        return 0, 0
    lo = min(w.lo for w in nonempty)
    hi = max(w.hi for w in nonempty)
    return lo, hi


def conjugate(sig: Sequence[Part], d: int) -> tuple:
    """Conjugate parts ``(nu'_1, ..., nu'_d)`` with ``nu'_v = #{i : sig_i >= v}``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return tuple(sum(1 for x in sig if x >= v) for v in range(1, d + 1))


def from_conjugate(counts: Sequence[int], length: int) -> tuple:
    """Rebuild ``F_d(sig)`` (nonnegative parts) from its conjugate counts."""
    return tuple(sum(1 for c in counts if c >= i) for i in range(1, length + 1))


def truncate_Fd(x, d: int):
    """Replace every part by ``min(part, d)``."""
    if isinstance(x, WindowSignature):
        return WindowSignature(x.offset, tuple(min(v, d) for v in x.window),
                               min(x.left, d), min(x.right, d))
    return tuple(min(parse_part(v), d) for v in x)


def _pairs(nu, kappa):
    if isinstance(nu, WindowSignature) != isinstance(kappa, WindowSignature):
        raise TypeError("compare signatures of the same kind")
    if isinstance(nu, WindowSignature):
        lo, hi = common_span(nu, kappa)
        return [(nu[i], kappa[i]) for i in range(lo, hi)], (nu.left, kappa.left), (nu.right, kappa.right)
    nu, kappa = as_signature(nu), as_signature(kappa)
    if len(nu) != len(kappa):
        raise ValueError("signatures of different lengths")
    return list(zip(nu, kappa)), None, None


def skew_contains(nu, kappa) -> bool:
    """``nu`` is contained in ``kappa`` (pointwise ``nu_i <= kappa_i``)."""
    pairs, lf, rf = _pairs(nu, kappa)
    if lf is not None and (lf[0] > lf[1] or rf[0] > rf[1]):
        return False
    return all(a <= b for a, b in pairs)


def skew_size(nu, kappa) -> Part:
    """``sum_i (kappa_i - nu_i)``, an int or :data:`INF`."""
    if not skew_contains(nu, kappa):
        raise ValueError("skew_size needs nu contained in kappa")
    pairs, lf, rf = _pairs(nu, kappa)
    if lf is not None and (lf[0] != lf[1] or rf[0] != rf[1]):
        return INF
    total = 0
    for a, b in pairs:
        diff = ext_sub(b, a)
        if diff is INF:
            return INF
        total += diff
    return total


def interval_states(nu, kappa) -> list:
    """Every signature ``eta`` with ``nu`` contained in ``eta`` contained in ``kappa``."""
    size = skew_size(nu, kappa)
    if size is INF:
        raise ValueError("interval has infinite skew size")
    window = isinstance(nu, WindowSignature)
    if window:
        lo, hi = common_span(nu, kappa)
        idx = range(lo, hi)
        lows = [nu[i] for i in idx]
        highs = [kappa[i] for i in idx]
        top = nu[lo - 1]
    else:
        lows, highs, top = list(nu), list(kappa), INF

    out: list = []

    def rec(j: int, prev: Part, acc: list):
        if j == len(lows):
            out.append(tuple(acc))
            return
        a, b = lows[j], highs[j]
        if a == b:
            if a <= prev:
                rec(j + 1, a, acc + [a])
            return
        for v in range(a, min(b, prev) + 1):
            rec(j + 1, v, acc + [v])

    rec(0, top, [])
    if window:
        return [WindowSignature(lo, w, nu.left, nu.right) for w in out]
    return out

