"""N-step phase-shifting: forward fringe synthesis and wrapped-phase decode.

The intensity model is ``I_n = I' + I'' * cos(phase + 2*pi*n/N)`` for
``n = 0..N-1``. The decode uses ``atan2(-S, C)`` with ``S = sum(I_n sin)``
and ``C = sum(I_n cos)`` so that decoding a synthesized stack returns the
wrapped input phase exactly; the scalar arctan form is sign-ambiguous and
the quadrant-aware choice here is the one that makes the round trip an
identity. All wrapped phases live in (-pi, pi].
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter1d

from fppkit.formats import FloatMap, FringeStack

TWO_PI = 2.0 * np.pi

# below this absolute magnitude on both phasor components a point is treated
# as zero-modulation (phase undefined)
ZERO_MODULATION_EPS = 1e-12


def _as_data(m) -> np.ndarray:
    return m.data if isinstance(m, FloatMap) else np.asarray(m, dtype=np.float64)


def wrap(x):
    """Wrap phase into (-pi, pi]; accepts scalars or arrays.

    The output is congruent to the input modulo 2*pi; the +pi boundary is
    kept (wrap(pi) == pi) and -pi is excluded.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot wrap non-finite phase")
    w = x - TWO_PI * np.round(x / TWO_PI)
    w = np.where(w <= -np.pi, w + TWO_PI, w)
    return w if w.ndim else float(w)


def phase_shifts(n_steps: int) -> np.ndarray:
    """The N phase offsets 2*pi*n/N, n = 0..N-1."""
    if n_steps < 3:
        raise ValueError(f"need at least 3 phase-shifting steps, got {n_steps}")
    return TWO_PI * np.arange(n_steps) / n_steps


def synthesize_fringes(phi, background, modulation, n_steps: int) -> FringeStack:
    """Render the N phase-shifted fringe images of a continuous phase map."""
    phi = _as_data(phi)
    bg = _as_data(background)
    mod = _as_data(modulation)
    if not (phi.shape == bg.shape == mod.shape):
        raise ValueError(
            f"phase {phi.shape}, background {bg.shape}, modulation {mod.shape} differ"
        )
    if mod.size and mod.min() < 0.0:
        raise ValueError("modulation must be non-negative")
    deltas = phase_shifts(n_steps)
    frames = tuple(FloatMap(bg + mod * np.cos(phi + d)) for d in deltas)
    return FringeStack(frames)


def _phasor(stack: FringeStack):
    """Sine and cosine projections S, C of the stack onto its carrier."""
    deltas = phase_shifts(stack.n_steps)
    frames = stack.as_array()
    s = np.tensordot(np.sin(deltas), frames, axes=(0, 0))
    c = np.tensordot(np.cos(deltas), frames, axes=(0, 0))
    return s, c


def decode_wrapped(stack: FringeStack) -> FloatMap:
    """Recover the wrapped phase in (-pi, pi] from a fringe stack.

    Points where both phasor components vanish (zero modulation) are marked
    invalid in the returned map's validity and carry the value 0.
    """
    s, c = _phasor(stack)
    degenerate = (np.abs(s) <= ZERO_MODULATION_EPS) & (np.abs(c) <= ZERO_MODULATION_EPS)
    phi = np.arctan2(-s, c)
    phi = np.where(phi <= -np.pi, phi + TWO_PI, phi)
    phi[degenerate] = 0.0
    return FloatMap(phi, validity=~degenerate)


def decode_background(stack: FringeStack) -> FloatMap:
    """Background intensity: pointwise mean of the N frames."""
    return FloatMap(stack.as_array().mean(axis=0))


def decode_modulation(stack: FringeStack) -> FloatMap:
    """Intensity modulation (2/N) * sqrt(S^2 + C^2); non-negative."""
    s, c = _phasor(stack)
    return FloatMap((2.0 / stack.n_steps) * np.hypot(s, c))


def synthesize_binary_patterns(
    period: float,
    n_steps: int,
    defocus_sigma: float,
    dims,
    axis: int = 1,
) -> FringeStack:
    """Phase-shifted 50%-duty square-wave patterns with Gaussian defocus.

    The square wave has the given period in pixels along ``axis`` and is
    shifted by period/N pixels per step; fractional shifts are handled by
    evaluating the square wave at the shifted phase directly, so the carrier
    phase at coordinate x is 2*pi*x/period. For integer periods the phase is
    reduced with exact integer arithmetic before the duty test (half-open
    quarter boundaries), making the pattern bit-deterministic and the duty
    exactly 50%. A defocus sigma of 0 leaves the pattern binary.
    """
    if period < 4:
        raise ValueError(f"period must be >= 4 px, got {period}")
    if defocus_sigma < 0:
        raise ValueError("defocus sigma must be non-negative")
    height, width = dims
    coord = np.arange(width if axis == 1 else height)
    deltas = phase_shifts(n_steps)
    frames = []
    for n in range(n_steps):
        # square(theta) = 1 on theta in [-pi/2, pi/2) mod 2*pi, matching the
        # cosine convention of the sinusoidal model up to harmonics
        if float(period).is_integer():
            p = int(round(period))
            # phase fraction as exact residue: t/(2*pi) = x/P + n/N,
            # scaled by 2*P*N so both terms are integral
            r = (2 * n_steps * coord + 2 * p * n) % (2 * p * n_steps)
            profile = (2 * r < p * n_steps) | (2 * r >= 3 * p * n_steps)
        else:
            frac = np.mod(coord / period + n / n_steps + 0.25, 1.0)
            profile = frac < 0.5
        profile = profile.astype(np.float64)
        if defocus_sigma > 0:
            profile = gaussian_filter1d(profile, defocus_sigma, mode="nearest")
        if axis == 1:
            frame = np.broadcast_to(profile, (height, width)).copy()
        else:
            frame = np.broadcast_to(profile[:, None], (height, width)).copy()
        frames.append(FloatMap(frame))
    return FringeStack(tuple(frames))
