"""Deterministic random blocks for probing and trace estimation.

Streams are counter-based (Philox keyed through a SeedSequence), and Gaussian
variates come from an explicit Box-Muller transform on the uniform stream, so
the same (seed, stream, kind, shape) always reproduces the same matrix,
independent of platform RNG defaults.
"""

import numpy as np

PROBE_KINDS = ("gaussian", "rademacher")

_SEED_MASK = (1 << 64) - 1


def _uniforms(shape, seed, stream):
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=(int(stream),))
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.random(shape)


def gaussian_block(n_rows, n_cols, seed, stream=0):
    """Standard-normal (n_rows, n_cols) block via Box-Muller."""
    u1 = _uniforms((n_rows, n_cols), seed, stream)
    u2 = _uniforms((n_rows, n_cols), seed, stream + (1 << 32))
    # 1 - u1 lies in (0, 1], keeping the log finite.
    r = np.sqrt(-2.0 * np.log1p(-u1))
    return r * np.cos(2.0 * np.pi * u2)


def rademacher_block(n_rows, n_cols, seed, stream=0):
    """Uniform +/-1 block."""
    u = _uniforms((n_rows, n_cols), seed, stream)
    return np.where(u < 0.5, -1.0, 1.0)


def random_block(n_rows, n_cols, kind, seed, stream=0):
    if kind == "gaussian":
        return gaussian_block(n_rows, n_cols, seed, stream)
    if kind == "rademacher":
        return rademacher_block(n_rows, n_cols, seed, stream)
    raise ValueError(f"unknown probe kind {kind!r}; expected one of {PROBE_KINDS}")
