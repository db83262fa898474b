"""Finite-alphabet locally private quantizers and the averaging decoder.

Four mechanism families, each unbiased for its input and eps0-LDP on its ball:

* l1 family (Hadamard): rotate x by the normalized Hadamard matrix, transmit a
  single (coordinate, sign) atom. Decode norm is a*sqrt(d)*ratio exactly.
* l2 family (sphere + sparse quantizer): project x onto a sphere of radius M
  by the hemisphere construction (``priv``), then quantize the sphere point to
  d i.i.d. signed coordinate samples (``quan``).
* linf family: transmit one (coordinate, sign) atom of x directly; decode is a
  scaled basis vector of norm a*d*ratio.
* lp mix: with probability mix_prob run the l1 mechanism on an inflated l1
  ball, otherwise the l2 mechanism on an inflated l2 ball; the message records
  which arm ran.

Throughout, ``ratio`` is (e^{eps0}+1)/(e^{eps0}-1) and ``kappa`` its inverse;
flip probabilities of the form 1/2 + (scaled coordinate)*kappa/2 give exactly
an e^{eps0} likelihood ratio between any two in-ball inputs.

Every encoder takes an explicit seedable random stream (anything accepted by
``numpy.random.default_rng``); identical streams reproduce identical messages.
The ``*_atom_probabilities`` helpers expose the closed-form output
distributions of the two enumerable families so tests can check unbiasedness,
variance, and the LDP ratio without sampling. The ``*_sample_decoded`` /
``mean_estimate_trials`` helpers are vectorized samplers, distributionally
identical to the scalar encode/decode path, for Monte-Carlo work at scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import OutOfBallError, ValidationError
from .linalg import (
    BallSpec,
    EXACT_TOL,
    as_vector,
    fwht_normalized,
    fwht_normalized_rows,
    p_norm,
)

# ---------------------------------------------------------------------------
# Messages and specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexSign:
    """A single (coordinate index, sign) atom; the alphabet has 2d elements."""

    j: int
    sign: int

    def __post_init__(self) -> None:
        if not (isinstance(self.j, (int, np.integer)) and self.j >= 0):
            raise ValidationError(f"atom index must be a nonnegative integer, got {self.j!r}")
        if self.sign not in (-1, 1):
            raise ValidationError(f"atom sign must be +1 or -1, got {self.sign!r}")


@dataclass(frozen=True)
class SparseSigned:
    """d signed coordinate samples (repeats allowed).

    ``is_zero`` marks the reserved message emitted when the quantizer input is
    the zero vector; it decodes to the zero vector.
    """

    pairs: tuple[tuple[int, int], ...]
    is_zero: bool = False

    def __post_init__(self) -> None:
        if len(self.pairs) < 1:
            raise ValidationError("sparse message needs at least one (coordinate, sign) pair")
        for c, s in self.pairs:
            if not (isinstance(c, (int, np.integer)) and c >= 0):
                raise ValidationError(f"coordinate must be a nonnegative integer, got {c!r}")
            if s not in (-1, 1):
                raise ValidationError(f"sign must be +1 or -1, got {s!r}")


@dataclass(frozen=True)
class MixTagged:
    """An arm tag ('L1' or 'L2') plus the inner message that arm produced."""

    arm: str
    inner: Union[IndexSign, SparseSigned]

    def __post_init__(self) -> None:
        if self.arm not in ("L1", "L2"):
            raise ValidationError(f"mix arm must be 'L1' or 'L2', got {self.arm!r}")
        if self.arm == "L1" and not isinstance(self.inner, IndexSign):
            raise ValidationError("L1 arm must carry an index-sign message")
        if self.arm == "L2" and not isinstance(self.inner, SparseSigned):
            raise ValidationError("L2 arm must carry a sparse signed message")


@dataclass(frozen=True)
class RawVector:
    """Uncompressed, unprivatized float64 payload (baseline mode only)."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValidationError("raw message must carry at least one value")


MechanismMessage = Union[IndexSign, SparseSigned, MixTagged, RawVector]


@dataclass(frozen=True)
class MechanismSpec:
    """Ball geometry, local privacy parameter, and (for the mix) arm probability.

    mix_prob is the probability of the l1 arm and must be set if and only if
    the lp-mix family is intended (finite p, typically outside {1, 2}).
    """

    ball: BallSpec
    epsilon0: float
    mix_prob: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon0) and self.epsilon0 > 0.0):
            raise ValidationError(f"epsilon0 must be a finite positive real, got {self.epsilon0!r}")
        if self.mix_prob is not None:
            if not 0.0 <= self.mix_prob <= 1.0:
                raise ValidationError(f"mix probability must lie in [0,1], got {self.mix_prob!r}")
            if math.isinf(self.ball.p):
                raise ValidationError("the mix family is defined for finite p only")


def mechanism_family(spec: MechanismSpec) -> str:
    """Which encoder a spec addresses: 'mix', 'l1', 'l2', or 'linf'."""
    if spec.mix_prob is not None:
        return "mix"
    if spec.ball.p == 1.0:
        return "l1"
    if spec.ball.p == 2.0:
        return "l2"
    if math.isinf(spec.ball.p):
        return "linf"
    raise ValidationError(
        f"p={spec.ball.p} has no direct mechanism; set mix_prob to use the lp mix"
    )


# ---------------------------------------------------------------------------
# Shared scalar helpers
# ---------------------------------------------------------------------------


def privacy_ratio(eps0: float) -> float:
    """(e^{eps0}+1)/(e^{eps0}-1); tends to 1 as eps0 -> inf (no-privacy limit)."""
    if math.isinf(eps0):
        return 1.0
    if not eps0 > 0.0:
        raise ValidationError(f"epsilon0 must be positive, got {eps0!r}")
    return (math.exp(eps0) + 1.0) / math.expm1(eps0)


def _kappa(eps0: float) -> float:
    return 1.0 / privacy_ratio(eps0)


def padded_dim(d: int) -> int:
    """Smallest power of two >= d (the Hadamard working dimension)."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    return 1 << (d - 1).bit_length()


def hadamard_column(n: int, j: int) -> np.ndarray:
    """Column j of the (unnormalized) n x n Hadamard matrix, n a power of two."""
    if n & (n - 1) or n < 1:
        raise ValidationError(f"Hadamard size must be a power of two, got {n}")
    if not 0 <= j < n:
        raise ValidationError(f"column index {j} out of range for size {n}")
    return _hadamard_columns(n, np.asarray([j]))[0]


def _hadamard_columns(n: int, js: np.ndarray) -> np.ndarray:
    """Rows of +-1: entry [t, i] = (-1)^popcount(i & js[t])."""
    v = np.arange(n, dtype=np.int64)[None, :] & np.asarray(js, dtype=np.int64)[:, None]
    v ^= v >> 32
    v ^= v >> 16
    v ^= v >> 8
    v ^= v >> 4
    v ^= v >> 2
    v ^= v >> 1
    return 1.0 - 2.0 * (v & 1).astype(np.float64)


def _rng(stream) -> np.random.Generator:
    return np.random.default_rng(stream)


def _require_in_ball(x, spec: MechanismSpec) -> np.ndarray:
    v = as_vector(x)
    if v.size != spec.ball.dim:
        raise ValidationError(
            f"input dimension {v.size} does not match ball dimension {spec.ball.dim}"
        )
    nrm = p_norm(v, spec.ball.p)
    if nrm > spec.ball.radius * (1.0 + EXACT_TOL):
        raise OutOfBallError(
            f"input l{spec.ball.p:g} norm {nrm:.6g} exceeds ball radius "
            f"{spec.ball.radius:.6g}; clip before encoding"
        )
    return v


def _check_family(spec: MechanismSpec, p_required: float, name: str) -> None:
    if spec.ball.p != p_required:
        raise ValidationError(f"{name} requires a ball with p={p_required:g}, got p={spec.ball.p:g}")


def _pad(v: np.ndarray, dp: int) -> np.ndarray:
    if v.size == dp:
        return v
    out = np.zeros(dp)
    out[: v.size] = v
    return out


# ---------------------------------------------------------------------------
# l1 family (Hadamard rotation + single signed index)
# ---------------------------------------------------------------------------


def _r1_plus_probs(v: np.ndarray, spec: MechanismSpec) -> np.ndarray:
    """Pr[sign=+1 | index=j] for every j, at the padded dimension."""
    dp = padded_dim(spec.ball.dim)
    y = fwht_normalized(_pad(v, dp))
    # Each rotated coordinate satisfies |sqrt(dp)*y_j| <= a, so the flip
    # probabilities stay inside [ (1-kappa)/2, (1+kappa)/2 ].
    return 0.5 + (math.sqrt(dp) / (2.0 * spec.ball.radius)) * _kappa(spec.epsilon0) * y


def r1_encode(x, spec: MechanismSpec, rng) -> IndexSign:
    """Encode an l1-ball vector as one signed Hadamard coordinate."""
    _check_family(spec, 1.0, "the l1 mechanism")
    v = _require_in_ball(x, spec)
    gen = _rng(rng)
    plus = _r1_plus_probs(v, spec)
    j = int(gen.integers(plus.size))
    sign = 1 if gen.random() < plus[j] else -1
    return IndexSign(j=j, sign=sign)


def r1_decode(msg: IndexSign, spec: MechanismSpec) -> np.ndarray:
    """sign * a * ratio * (Hadamard column j), truncated to the original d."""
    _check_family(spec, 1.0, "the l1 mechanism")
    dp = padded_dim(spec.ball.dim)
    if not 0 <= msg.j < dp:
        raise ValidationError(f"index {msg.j} out of range for working dimension {dp}")
    col = hadamard_column(dp, msg.j)
    scale = msg.sign * spec.ball.radius * privacy_ratio(spec.epsilon0)
    return scale * col[: spec.ball.dim]


def r1_atom_probabilities(x, spec: MechanismSpec) -> dict[tuple[int, int], float]:
    """Closed-form output distribution over all 2*dp atoms (j, sign)."""
    _check_family(spec, 1.0, "the l1 mechanism")
    v = _require_in_ball(x, spec)
    plus = _r1_plus_probs(v, spec)
    dp = plus.size
    probs: dict[tuple[int, int], float] = {}
    for j in range(dp):
        probs[(j, 1)] = plus[j] / dp
        probs[(j, -1)] = (1.0 - plus[j]) / dp
    return probs


# ---------------------------------------------------------------------------
# l2 family (hemisphere sphere projection + sparse signed quantizer)
# ---------------------------------------------------------------------------


def hemisphere_radius(d: int, a: float, eps0: float) -> float:
    """Sphere radius M = a * sqrt(pi) * Gamma((d+1)/2)/Gamma(d/2) * ratio.

    This is the unique radius for which the hemisphere construction below is
    unbiased: a uniform point y on the half-sphere {||y||=M, y.u > 0} has
    E[y] = M * (Gamma(d/2) / (sqrt(pi)*Gamma((d+1)/2))) * u, and the direction
    flip contributes the remaining kappa / ratio factor. The Gamma ratio is
    evaluated through log-gamma differences so large d cannot overflow.
    """
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    gr = math.exp(math.lgamma((d + 1) / 2.0) - math.lgamma(d / 2.0))
    return a * math.sqrt(math.pi) * gr * privacy_ratio(eps0)


def priv(x, spec: MechanismSpec, rng) -> np.ndarray:
    """Unbiased projection of an l2-ball vector onto the sphere of radius M.

    The direction is resampled to +-x/||x|| with probabilities
    1/2 +- ||x||/(2a); with probability e^{eps0}/(e^{eps0}+1) the output is
    uniform on the hemisphere around the kept direction, otherwise on the
    complementary one. Output norm is exactly M.
    """
    _check_family(spec, 2.0, "the l2 mechanism")
    v = _require_in_ball(x, spec)
    gen = _rng(rng)
    d, a = spec.ball.dim, spec.ball.radius
    radius = hemisphere_radius(d, a, spec.epsilon0)

    nrm = float(np.linalg.norm(v))
    u_dir = gen.random()
    if nrm == 0.0:
        # A fair +-flip of a fixed axis: the two hemispheres then mix to the
        # uniform sphere, whose mean is 0 = x.
        direction = np.zeros(d)
        direction[0] = 1.0 if u_dir < 0.5 else -1.0
    else:
        direction = v / nrm if u_dir < 0.5 + nrm / (2.0 * a) else -v / nrm

    same_side = gen.random() < math.exp(spec.epsilon0) / (math.exp(spec.epsilon0) + 1.0)
    g = gen.standard_normal(d)
    gn = float(np.linalg.norm(g))
    while gn == 0.0:  # pragma: no cover - probability zero
        g = gen.standard_normal(d)
        gn = float(np.linalg.norm(g))
    y = (radius / gn) * g
    if (float(np.dot(y, direction)) > 0.0) != same_side:
        y = -y
    return y


def quan(x, radius: float, rng) -> SparseSigned:
    """Quantize a vector of l2 norm <= radius to d i.i.d. signed coordinates.

    The vector is flipped to +-x/||x||_1 with probabilities
    1/2 +- ||x||_1/(2*radius*sqrt(d)) (which sum to one and make the decoded
    message unbiased for x), then d coordinates are drawn i.i.d. from the
    distribution |x_tilde| and transmitted with the matching signs. A zero
    input yields the reserved zero message.
    """
    v = as_vector(x)
    if not radius > 0.0:
        raise ValidationError(f"quantizer radius must be positive, got {radius!r}")
    d = v.size
    if float(np.linalg.norm(v)) > radius * (1.0 + EXACT_TOL):
        raise OutOfBallError("quantizer input exceeds its l2 radius")
    gen = _rng(rng)
    l1 = float(np.sum(np.abs(v)))
    if l1 == 0.0:
        return SparseSigned(pairs=tuple((0, 1) for _ in range(d)), is_zero=True)
    keep = gen.random() < 0.5 + l1 / (2.0 * radius * math.sqrt(d))
    xt = v / l1 if keep else -v / l1
    weights = np.abs(xt)
    weights = weights / weights.sum()
    coords = gen.choice(d, size=d, replace=True, p=weights)
    signs = np.where(xt[coords] > 0.0, 1, -1)
    return SparseSigned(pairs=tuple((int(c), int(s)) for c, s in zip(coords, signs)))


def quan_decode(msg: SparseSigned, radius: float, d: int) -> np.ndarray:
    """(radius*sqrt(d)/d) * sum_j sign_j e_{coord_j}; zero message -> 0."""
    if msg.is_zero:
        return np.zeros(d)
    z = np.zeros(d)
    for c, s in msg.pairs:
        if c >= d:
            raise ValidationError(f"coordinate {c} out of range for dimension {d}")
        z[c] += s
    return z * (radius * math.sqrt(d) / len(msg.pairs))


def r2_encode(x, spec: MechanismSpec, rng) -> SparseSigned:
    """Sphere projection followed by the sparse quantizer at radius M."""
    _check_family(spec, 2.0, "the l2 mechanism")
    v = _require_in_ball(x, spec)
    gen = _rng(rng)
    radius = hemisphere_radius(spec.ball.dim, spec.ball.radius, spec.epsilon0)
    return quan(priv(v, spec, gen), radius, gen)


def r2_decode(msg: SparseSigned, spec: MechanismSpec) -> np.ndarray:
    _check_family(spec, 2.0, "the l2 mechanism")
    d = spec.ball.dim
    if not msg.is_zero and len(msg.pairs) != d:
        raise ValidationError(f"expected {d} coordinate samples, got {len(msg.pairs)}")
    radius = hemisphere_radius(d, spec.ball.radius, spec.epsilon0)
    return quan_decode(msg, radius, d)


# ---------------------------------------------------------------------------
# linf family (single signed coordinate, no rotation)
# ---------------------------------------------------------------------------


def _rinf_plus_probs(v: np.ndarray, spec: MechanismSpec) -> np.ndarray:
    return 0.5 + v * (_kappa(spec.epsilon0) / (2.0 * spec.ball.radius))


def rinf_encode(x, spec: MechanismSpec, rng) -> IndexSign:
    """Encode an linf-ball vector as one signed coordinate sample."""
    _check_family(spec, math.inf, "the linf mechanism")
    v = _require_in_ball(x, spec)
    gen = _rng(rng)
    plus = _rinf_plus_probs(v, spec)
    j = int(gen.integers(v.size))
    sign = 1 if gen.random() < plus[j] else -1
    return IndexSign(j=j, sign=sign)


def rinf_decode(msg: IndexSign, spec: MechanismSpec) -> np.ndarray:
    """sign * a * d * ratio * e_j (norm a*d*ratio for every message)."""
    _check_family(spec, math.inf, "the linf mechanism")
    d = spec.ball.dim
    if not 0 <= msg.j < d:
        raise ValidationError(f"index {msg.j} out of range for dimension {d}")
    out = np.zeros(d)
    out[msg.j] = msg.sign * spec.ball.radius * d * privacy_ratio(spec.epsilon0)
    return out


def rinf_atom_probabilities(x, spec: MechanismSpec) -> dict[tuple[int, int], float]:
    """Closed-form output distribution over all 2d atoms (j, sign)."""
    _check_family(spec, math.inf, "the linf mechanism")
    v = _require_in_ball(x, spec)
    plus = _rinf_plus_probs(v, spec)
    d = v.size
    probs: dict[tuple[int, int], float] = {}
    for j in range(d):
        probs[(j, 1)] = plus[j] / d
        probs[(j, -1)] = (1.0 - plus[j]) / d
    return probs


# ---------------------------------------------------------------------------
# lp mix family
# ---------------------------------------------------------------------------


def rp_arm_specs(spec: MechanismSpec) -> tuple[MechanismSpec, MechanismSpec]:
    """The two arm specs: l1 at radius a*d^{1-1/p}, l2 at a*max{d^{1/2-1/p}, 1}.

    Norm inequalities guarantee every lp-ball input lies in both arm balls.
    """
    if spec.mix_prob is None:
        raise ValidationError("the lp mix requires mix_prob")
    p, a, d = spec.ball.p, spec.ball.radius, spec.ball.dim
    if math.isinf(p):
        raise ValidationError("the lp mix is defined for finite p only")
    l1_radius = a * d ** (1.0 - 1.0 / p)
    l2_radius = a * max(d ** (0.5 - 1.0 / p), 1.0)
    return (
        MechanismSpec(BallSpec(1.0, l1_radius, d), spec.epsilon0),
        MechanismSpec(BallSpec(2.0, l2_radius, d), spec.epsilon0),
    )


def rp_encode(x, spec: MechanismSpec, rng) -> MixTagged:
    """Run the l1 arm with probability mix_prob, otherwise the l2 arm."""
    v = _require_in_ball(x, spec)
    gen = _rng(rng)
    arm_l1, arm_l2 = rp_arm_specs(spec)
    if gen.random() < spec.mix_prob:
        return MixTagged("L1", r1_encode(v, arm_l1, gen))
    return MixTagged("L2", r2_encode(v, arm_l2, gen))


def rp_decode(msg: MixTagged, spec: MechanismSpec) -> np.ndarray:
    arm_l1, arm_l2 = rp_arm_specs(spec)
    if msg.arm == "L1":
        return r1_decode(msg.inner, arm_l1)
    return r2_decode(msg.inner, arm_l2)


# ---------------------------------------------------------------------------
# Dispatch and the averaging decoder
# ---------------------------------------------------------------------------


def encode_message(x, spec: MechanismSpec, rng) -> MechanismMessage:
    """Encode with the family the spec addresses (see mechanism_family)."""
    family = mechanism_family(spec)
    if family == "mix":
        return rp_encode(x, spec, rng)
    if family == "l1":
        return r1_encode(x, spec, rng)
    if family == "l2":
        return r2_encode(x, spec, rng)
    return rinf_encode(x, spec, rng)


def decode_message(msg: MechanismMessage, spec: MechanismSpec) -> np.ndarray:
    """Decode any message under the spec that produced it."""
    if isinstance(msg, RawVector):
        v = np.asarray(msg.values, dtype=np.float64)
        if v.size != spec.ball.dim:
            raise ValidationError(
                f"raw message carries {v.size} values for dimension {spec.ball.dim}"
            )
        return v
    family = mechanism_family(spec)
    if family == "mix":
        if not isinstance(msg, MixTagged):
            raise ValidationError(f"the mix decoder got {type(msg).__name__}")
        return rp_decode(msg, spec)
    if family == "l1":
        if not isinstance(msg, IndexSign):
            raise ValidationError(f"the l1 decoder got {type(msg).__name__}")
        return r1_decode(msg, spec)
    if family == "l2":
        if not isinstance(msg, SparseSigned):
            raise ValidationError(f"the l2 decoder got {type(msg).__name__}")
        return r2_decode(msg, spec)
    if not isinstance(msg, IndexSign):
        raise ValidationError(f"the linf decoder got {type(msg).__name__}")
    return rinf_decode(msg, spec)


def mean_estimate(messages, spec: MechanismSpec) -> np.ndarray:
    """(1/n) * sum of decoded messages — the server-side mean estimator."""
    msgs = list(messages)
    if not msgs:
        raise ValidationError("mean estimation needs at least one message")
    acc = np.zeros(spec.ball.dim)
    for msg in msgs:
        acc += decode_message(msg, spec)
    return acc / len(msgs)


# ---------------------------------------------------------------------------
# Vectorized samplers (distributionally identical to the scalar paths)
# ---------------------------------------------------------------------------

_CHUNK = 1 << 16


def _r1_rows_decoded(rows: np.ndarray, spec: MechanismSpec, gen: np.random.Generator) -> np.ndarray:
    """One decoded l1-family message per input row."""
    n, d = rows.shape
    a, dp = spec.ball.radius, padded_dim(d)
    pad = np.zeros((n, dp))
    pad[:, :d] = rows
    y = fwht_normalized_rows(pad)
    plus = 0.5 + (math.sqrt(dp) / (2.0 * a)) * _kappa(spec.epsilon0) * y
    out = np.empty((n, d))
    scale = a * privacy_ratio(spec.epsilon0)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        js = gen.integers(dp, size=hi - lo)
        signs = np.where(gen.random(hi - lo) < plus[np.arange(lo, hi), js], 1.0, -1.0)
        cols = _hadamard_columns(dp, js)[:, :d]
        out[lo:hi] = (scale * signs)[:, None] * cols
    return out


def _rinf_rows_decoded(rows: np.ndarray, spec: MechanismSpec, gen: np.random.Generator) -> np.ndarray:
    n, d = rows.shape
    a = spec.ball.radius
    plus = 0.5 + rows * (_kappa(spec.epsilon0) / (2.0 * a))
    js = gen.integers(d, size=n)
    signs = np.where(gen.random(n) < plus[np.arange(n), js], 1.0, -1.0)
    out = np.zeros((n, d))
    out[np.arange(n), js] = signs * (a * d * privacy_ratio(spec.epsilon0))
    return out


def _priv_rows(rows: np.ndarray, spec: MechanismSpec, gen: np.random.Generator) -> np.ndarray:
    """One sphere point per input row (the vectorized hemisphere projection)."""
    n, d = rows.shape
    a = spec.ball.radius
    radius = hemisphere_radius(d, a, spec.epsilon0)
    nrm = np.linalg.norm(rows, axis=1)
    u_dir = gen.random(n)
    keep = u_dir < 0.5 + nrm / (2.0 * a)
    safe = np.where(nrm == 0.0, 1.0, nrm)
    dirs = rows / safe[:, None]
    dirs[nrm == 0.0] = 0.0
    dirs[nrm == 0.0, 0] = 1.0
    dirs[~keep] *= -1.0
    same_side = gen.random(n) < math.exp(spec.epsilon0) / (math.exp(spec.epsilon0) + 1.0)
    g = gen.standard_normal((n, d))
    g *= radius / np.linalg.norm(g, axis=1)[:, None]
    side = np.einsum("ij,ij->i", g, dirs) > 0.0
    g[side != same_side] *= -1.0
    return g


def _quan_rows_decoded(rows: np.ndarray, radius: float, gen: np.random.Generator) -> np.ndarray:
    """One decoded quantizer message per input row (rows assumed nonzero)."""
    n, d = rows.shape
    l1 = np.sum(np.abs(rows), axis=1)
    keep = gen.random(n) < 0.5 + l1 / (2.0 * radius * math.sqrt(d))
    xt = rows / l1[:, None]
    xt[~keep] *= -1.0
    weights = np.abs(xt)
    cum = np.cumsum(weights, axis=1)
    cum /= cum[:, -1][:, None]
    # Row-wise inverse-CDF sampling of d i.i.d. coordinates per row.
    u = gen.random((n, d))
    coords = np.minimum((u[:, :, None] >= cum[:, None, :]).sum(axis=2), d - 1)
    signs = np.where(np.take_along_axis(xt, coords, axis=1) > 0.0, 1.0, -1.0)
    dec = np.zeros((n, d))
    np.add.at(dec, (np.repeat(np.arange(n), d), coords.ravel()), signs.ravel())
    return dec * (radius * math.sqrt(d) / d)


def _r2_rows_decoded(rows: np.ndarray, spec: MechanismSpec, gen: np.random.Generator) -> np.ndarray:
    n, d = rows.shape
    radius = hemisphere_radius(d, spec.ball.radius, spec.epsilon0)
    out = np.empty((n, d))
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        sphere = _priv_rows(np.array(rows[lo:hi]), spec, gen)
        out[lo:hi] = _quan_rows_decoded(sphere, radius, gen)
    return out


def _mix_rows_decoded(rows: np.ndarray, spec: MechanismSpec, gen: np.random.Generator) -> np.ndarray:
    arm_l1, arm_l2 = rp_arm_specs(spec)
    n = rows.shape[0]
    take_l1 = gen.random(n) < spec.mix_prob
    out = np.empty_like(rows)
    if take_l1.any():
        out[take_l1] = _r1_rows_decoded(rows[take_l1], arm_l1, gen)
    if (~take_l1).any():
        out[~take_l1] = _r2_rows_decoded(rows[~take_l1], arm_l2, gen)
    return out


_ROW_SAMPLERS = {
    "l1": _r1_rows_decoded,
    "l2": _r2_rows_decoded,
    "linf": _rinf_rows_decoded,
    "mix": _mix_rows_decoded,
}


def sample_decoded(x, spec: MechanismSpec, rng, n_samples: int) -> np.ndarray:
    """n_samples independent decoded messages for one input, as rows."""
    v = _require_in_ball(x, spec)
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    rows = np.broadcast_to(v, (n_samples, v.size))
    return _ROW_SAMPLERS[mechanism_family(spec)](rows, spec, _rng(rng))


def mean_estimate_trials(dataset, spec: MechanismSpec, rng, trials: int) -> np.ndarray:
    """Repeated mean estimation over a fixed dataset, one estimate per row.

    Distributionally identical to encoding every dataset row once per trial
    and averaging the decodes; the l1/linf paths aggregate through signed
    index counts so a trial costs one transform instead of n decodes.
    """
    rows = np.asarray(dataset, dtype=np.float64)
    if rows.ndim != 2:
        raise ValidationError(f"dataset must be 2-D (clients x dim), got shape {rows.shape}")
    n, d = rows.shape
    if d != spec.ball.dim:
        raise ValidationError(f"dataset dimension {d} does not match ball dimension {spec.ball.dim}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    gen = _rng(rng)
    family = mechanism_family(spec)
    a, ratio = spec.ball.radius, privacy_ratio(spec.epsilon0)
    out = np.empty((trials, d))

    if family == "l1":
        dp = padded_dim(d)
        pad = np.zeros((n, dp))
        pad[:, :d] = rows
        plus = 0.5 + (math.sqrt(dp) / (2.0 * a)) * _kappa(spec.epsilon0) * fwht_normalized_rows(pad)
        idx = np.arange(n)
        for t in range(trials):
            js = gen.integers(dp, size=n)
            signs = np.where(gen.random(n) < plus[idx, js], 1.0, -1.0)
            net = np.bincount(js, weights=signs, minlength=dp)
            # sum of decodes = a*ratio * H @ net = a*ratio*sqrt(dp) * fwht(net)
            out[t] = (a * ratio * math.sqrt(dp)) * fwht_normalized(net)[:d] / n
        return out

    if family == "linf":
        plus = 0.5 + rows * (_kappa(spec.epsilon0) / (2.0 * a))
        idx = np.arange(n)
        for t in range(trials):
            js = gen.integers(d, size=n)
            signs = np.where(gen.random(n) < plus[idx, js], 1.0, -1.0)
            net = np.bincount(js, weights=signs, minlength=d)
            out[t] = (a * d * ratio) * net / n
        return out

    sampler = _ROW_SAMPLERS[family]
    for t in range(trials):
        out[t] = sampler(rows, spec, gen).mean(axis=0)
    return out
