"""Right-directed index posets with finite exploration procedures.

Every poset offers ``chain(budget)``, an increasing sequence of candidate
thresholds, and ``tail(lam, budget)``, a finite sample of elements ``mu >= lam``
(always starting with ``lam`` itself).  Checkers quantify over these.
"""

from __future__ import annotations

import itertools


class IndexPoset:
    def leq(self, a, b):
        raise NotImplementedError

    def join(self, a, b):
        raise NotImplementedError

    def chain(self, budget):
        raise NotImplementedError

    def tail(self, lam, budget):
        raise NotImplementedError

    def elements(self, limit):
        """Up to ``limit`` elements, for axiom spot checks."""
        raise NotImplementedError


class NaturalPoset(IndexPoset):
    """The natural numbers with their usual order."""

    def leq(self, a, b):
        return a <= b

    def join(self, a, b):
        return max(a, b)

    def chain(self, budget):
        return [2 ** k - 1 for k in range(budget)]

    def tail(self, lam, budget):
        return [lam + i for i in range(max(1, budget))]

    def elements(self, limit):
        return list(range(limit))

    def __eq__(self, other):
        return isinstance(other, NaturalPoset)

    def __hash__(self):
        return hash("N")

    def __repr__(self):
        return "NaturalPoset()"


class SingletonPoset(IndexPoset):
    """One element with the trivial order."""

    def leq(self, a, b):
        return a == b == 0

    def join(self, a, b):
        return 0

    def chain(self, budget):
        return [0] if budget > 0 else []

    def tail(self, lam, budget):
        return [0]

    def elements(self, limit):
        return [0][:limit]


def _prefix(size, j):
    return frozenset(range(min(j, size)))


class FiniteSubsetPoset(IndexPoset):
    """Nonvoid finite subsets of ``range(size)`` ordered by inclusion, joined by union."""

    def __init__(self, size):
        if size < 1:
            raise ValueError("need at least one point")
        self.size = size

    def __eq__(self, other):
        return type(other) is FiniteSubsetPoset and other.size == self.size

    def __hash__(self):
        return hash(("subsets", self.size))

    def leq(self, a, b):
        return a <= b

    def join(self, a, b):
        return a | b

    def chain(self, budget):
        return [_prefix(self.size, k + 1) for k in range(min(budget, self.size))]

    def tail(self, lam, budget):
        # the finite poset has a top element, which bounds every tail
        top = _prefix(self.size, self.size)
        out = [lam] if lam == top else [lam, top]
        seen = set(out)
        for j in range(1, max(1, budget)):
            for cand in (lam | _prefix(self.size, j), lam | {min(j, self.size) - 1}):
                if cand not in seen:
                    seen.add(cand)
                    out.append(cand)
        return out[:max(2, budget)]

    def elements(self, limit):
        out = []
        for r in range(1, self.size + 1):
            for combo in itertools.combinations(range(self.size), r):
                out.append(frozenset(combo))
                if len(out) >= limit:
                    return out
        return out


class ExampleOnePoset(IndexPoset):
    """Pairs ``(A, k)``: finite nonvoid index set and radius level.

    ``(A, k) <= (B, l)`` iff ``A`` is a subset of ``B`` and ``k <= l``; with
    radii decreasing in the level this is exactly "more points, supports no
    larger".
    """

    def __init__(self, size, levels):
        self.size = size
        self.levels = levels

    def __eq__(self, other):
        return (type(other) is ExampleOnePoset
                and (other.size, other.levels) == (self.size, self.levels))

    def __hash__(self):
        return hash(("example-one", self.size, self.levels))

    def leq(self, a, b):
        return a[0] <= b[0] and a[1] <= b[1]

    def join(self, a, b):
        return (a[0] | b[0], max(a[1], b[1]))

    def _lvl(self, k):
        return min(k, self.levels - 1)

    def chain(self, budget):
        return [(_prefix(self.size, i + 1), self._lvl(i)) for i in range(budget)]

    def tail(self, lam, budget):
        A, k = lam
        out = [lam]
        seen = {lam}
        for j in range(1, max(1, budget)):
            for cand in ((A | _prefix(self.size, j), self._lvl(k + j)),
                         (A | _prefix(self.size, j), k),
                         (A, self._lvl(k + j))):
                if cand not in seen:
                    seen.add(cand)
                    out.append(cand)
        return out[:max(1, budget)]

    def elements(self, limit):
        out = []
        sub = FiniteSubsetPoset(self.size).elements(limit)
        for k in range(self.levels):
            for A in sub:
                out.append((A, k))
                if len(out) >= limit:
                    return out
        return out


def check_axioms(poset, limit=12):
    """Reflexive, antisymmetric, transitive and joins dominate, on sampled elements."""
    els = poset.elements(limit)
    for a in els:
        if not poset.leq(a, a):
            return False
    for a, b in itertools.product(els, repeat=2):
        if poset.leq(a, b) and poset.leq(b, a) and a != b:
            return False
        j = poset.join(a, b)
        if not (poset.leq(a, j) and poset.leq(b, j)):
            return False
    for a, b, c in itertools.product(els[:8], repeat=3):
        if poset.leq(a, b) and poset.leq(b, c) and not poset.leq(a, c):
            return False
    return True
