"""Counter-based pseudo-random streams.

All randomness in the package flows through stateless 64-bit streams: a
stream seed is derived by chain-mixing identifiers (master seed, a purpose
tag, an ad id, a replication index, ...) and the t-th draw of a stream is
``mix64(seed + (t + 1) * GOLDEN)``, the SplitMix64 output function over a
Weyl sequence. Because every draw is addressed by (stream, counter) rather
than produced by mutating generator state, generation vectorizes freely and
the results are independent of iteration order, chunking and thread
scheduling; the same (master seed, config) always yields byte-identical
data.

Counters are organized in fields of 64 slots so that independent attribute
draws for the same ad never collide: field f, slot s uses counter
``f * 64 + s``.
"""

from __future__ import annotations

import numpy as np

from .normal import normal_ppf

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

#: Draws per counter field; one field comfortably covers the resumes of an
#: ad or its university shuffle.
FIELD = 64

_U53 = np.float64(1.0 / 9007199254740992.0)  # 2 ** -53


def mix64(x):
    """SplitMix64 finalizer, vectorized over uint64 arrays."""
    # uint64 wraparound is the point; silence the scalar overflow warning.
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
        return z


def derive(*parts):
    """Derive a stream seed (or an array of them) from mixed identifiers.

    Accepts non-negative ints, strings (hashed stably) and integer arrays;
    at most one array argument, which broadcasts into an array of seeds.
    """
    seed = np.uint64(0)
    with np.errstate(over="ignore"):
        for part in parts:
            if isinstance(part, str):
                h = np.uint64(14695981039346656037)  # FNV-1a offset basis
                for b in part.encode("utf-8"):
                    h = (h ^ np.uint64(b)) * np.uint64(1099511628211)
                token = h
            else:
                token = np.asarray(part).astype(np.uint64)
            seed = mix64((seed + GOLDEN) ^ mix64(token + GOLDEN))
    return seed


def raw64(stream, counters):
    """The raw 64-bit outputs of ``stream`` at the given counters."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.asarray(stream, dtype=np.uint64) + (c + np.uint64(1)) * GOLDEN)


def uniform(stream, counters):
    """Uniform draws on the open interval (0, 1)."""
    bits = raw64(stream, counters)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def normal(stream, counters):
    """Standard normal draws via the package's inverse CDF."""
    return normal_ppf(uniform(stream, counters))


def integers(stream, counters, n):
    """Integer draws uniform on [0, n). Bias is below n * 2**-53."""
    if n <= 0:
        raise ValueError("integers requires n >= 1")
    bits = raw64(stream, counters) >> np.uint64(11)
    return ((bits * np.uint64(n)) >> np.uint64(53)).astype(np.int64)


def categorical(stream, counters, probs):
    """Categorical draws with the given probability vector.

    ``probs`` must be nonnegative and sum to 1 within 1e-9; the last
    category absorbs the residual rounding mass.
    """
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("categorical probabilities must be nonnegative")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"categorical probabilities sum to {total!r}, expected 1")
    edges = np.cumsum(p)
    edges[-1] = 1.0
    u = uniform(stream, counters)
    return np.searchsorted(edges, u, side="right").astype(np.int64)


def shuffle_columns(stream, n_rows, n_items, field):
    """A deterministic permutation of [0, n_items) per stream element.

    ``stream`` is an array of n_rows stream seeds; row i's permutation is
    the ascending order of that row's uniforms, so it only depends on row
    i's stream. Used to draw without replacement (take the first k columns).
    """
    counters = np.uint64(field * FIELD) + np.arange(n_items, dtype=np.uint64)
    u = uniform(np.asarray(stream, dtype=np.uint64)[:, None], counters[None, :])
    if u.shape != (n_rows, n_items):
        raise ValueError("stream must provide one seed per row")
    return np.argsort(u, axis=1, kind="stable").astype(np.int64)


def field_counters(field, slots):
    """Counters for ``slots`` draws inside counter field ``field``."""
    slots = np.asarray(slots, dtype=np.uint64)
    if np.any(slots >= FIELD):
        raise ValueError(f"counter field holds only {FIELD} slots")
    return np.uint64(field * FIELD) + slots
