"""Independent reference implementations used by the tests."""

from itertools import product


def replacement_reference(capacity, sizes, importances, arrivals):
    """Brute-force importance-based replacement over unit-sized bookkeeping.

    The cache is a list of [cid, importance, last_access, inserted_at].  On a
    miss that does not fit, every prefix of the eviction order is tried and the
    shortest one whose members all score strictly below the newcomer and that
    frees enough room is evicted.  Returns the per-arrival (admitted, evicted)
    decisions and the final cache contents.
    """
    cache = []
    decisions = []
    for t, cid in enumerate(arrivals):
        imp = importances[cid]
        found = [e for e in cache if e[0] == cid]
        if found:
            found[0][1] = imp
            found[0][2] = t
            decisions.append((True, ()))
            continue
        used = sum(sizes[e[0]] for e in cache)
        if sizes[cid] > capacity:
            decisions.append((False, ()))
            continue
        if used + sizes[cid] <= capacity:
            cache.append([cid, imp, t, t])
            decisions.append((True, ()))
            continue
        order = sorted(cache, key=lambda e: (e[1], e[2], e[3], e[0]))
        chosen = None
        for k in range(1, len(order) + 1):
            prefix = order[:k]
            if any(e[1] >= imp for e in prefix):
                break
            if used - sum(sizes[e[0]] for e in prefix) + sizes[cid] <= capacity:
                chosen = prefix
                break
        if chosen is None:
            decisions.append((False, ()))
            continue
        gone = {e[0] for e in chosen}
        cache = [e for e in cache if e[0] not in gone]
        cache.append([cid, imp, t, t])
        decisions.append((True, tuple(e[0] for e in chosen)))
    return decisions, sorted(e[0] for e in cache)


def all_sequences(n_items, max_len):
    for length in range(1, max_len + 1):
        yield from product(range(n_items), repeat=length)


def lru_reference(capacity_items, trace):
    """Textbook LRU over equal-sized items: a recency list truncated to capacity."""
    stack, hits = [], 0
    for cid in trace:
        if cid in stack:
            hits += 1
            stack.remove(cid)
        stack.insert(0, cid)
        del stack[capacity_items:]
    return hits
