"""Bit-exact serialization of mechanism messages and communication accounting.

Three layers:

* atom codes — an (index, sign) atom over dimension d costs exactly
  ceil(log2 d) + 1 bits (index big-endian, then the sign bit, 1 meaning +).
* multiset packing — a bag of s atoms from an alphabet of size B is ranked
  colexicographically among all C(s+B-1, s) multisets via the combinatorial
  number system, costing ceil(log2 C(s+B-1, s)) bits; order carries no
  information once messages pass through a shuffler, so none is paid for.
  The bit length always stays within one bit of the Stirling envelope
  s*(log2 e + log2((s+B-1)/s)).
* framing — on the wire each message is [1 byte: variant tag]
  [2 bytes: payload bit length, big-endian][payload, zero-padded to a byte
  boundary]. Bit accounting throughout the package counts payload bits only;
  the 3-byte frame header is transport overhead the cost model does not
  charge.

Bitstrings at the bit level are plain '0'/'1' strings (they are small and
test-friendly); framing packs them into bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from .errors import ValidationError
from . import mechanisms as mech

LOG2_E = math.log2(math.e)

# Frame tags (one byte each).
TAG_ZERO = 0x00          # reserved zero message (empty payload)
TAG_L1_ATOM = 0x01       # index-sign atom, l1 family (index over the padded dim)
TAG_L2_SPARSE = 0x02     # d signed coordinate samples, multiset-packed
TAG_LINF_ATOM = 0x03     # index-sign atom, linf family
TAG_MIX_L1 = 0x04        # mix message, l1 arm payload
TAG_MIX_L2 = 0x05        # mix message, l2 arm payload
TAG_RAW = 0x06           # uncompressed float64 vector (baseline mode)


def index_sign_bits(d: int) -> int:
    """Exact cost of one atom: ceil(log2 d) + 1 bits."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    return (d - 1).bit_length() + 1


def encode_index_sign(msg: mech.IndexSign, d: int) -> str:
    """Index big-endian in ceil(log2 d) bits, then the sign bit (1 means +)."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    if not 0 <= msg.j < d:
        raise ValidationError(f"index {msg.j} out of range for dimension {d}")
    nbits = (d - 1).bit_length()
    prefix = format(msg.j, f"0{nbits}b") if nbits else ""
    return prefix + ("1" if msg.sign > 0 else "0")


def decode_index_sign(bits: str, d: int) -> mech.IndexSign:
    """Exact inverse of encode_index_sign."""
    expected = index_sign_bits(d)
    if len(bits) != expected or any(b not in "01" for b in bits):
        raise ValidationError(f"expected {expected} bits for dimension {d}, got {bits!r}")
    j = int(bits[:-1], 2) if len(bits) > 1 else 0
    if j >= d:
        raise ValidationError(f"decoded index {j} out of range for dimension {d}")
    return mech.IndexSign(j=j, sign=1 if bits[-1] == "1" else -1)


@dataclass(frozen=True)
class HistogramCode:
    """A multiset of s atoms over [0, B), as its rank among all such multisets."""

    rank: int
    s: int
    B: int

    def __post_init__(self) -> None:
        if self.s < 1 or self.B < 1:
            raise ValidationError(f"need s >= 1 and B >= 1, got s={self.s}, B={self.B}")
        if not 0 <= self.rank < math.comb(self.s + self.B - 1, self.s):
            raise ValidationError(
                f"rank {self.rank} out of range for {self.s} atoms over alphabet {self.B}"
            )

    @property
    def bit_length(self) -> int:
        """ceil(log2 C(s+B-1, s)) — exact big-integer arithmetic, no floats."""
        return (math.comb(self.s + self.B - 1, self.s) - 1).bit_length()


def multiset_bits(s: int, B: int) -> int:
    """Exact payload bits for a packed multiset of s atoms over alphabet B."""
    return (math.comb(s + B - 1, s) - 1).bit_length()


def multiset_envelope_bits(s: int, B: int) -> float:
    """The Stirling envelope s*(log2 e + log2((s+B-1)/s)); exact cost is <= this + 1."""
    return s * (LOG2_E + math.log2((s + B - 1) / s))


def histogram_pack(atoms, B: int) -> HistogramCode:
    """Rank the multiset of atoms (order discarded) over the alphabet [0, B).

    Sorting makes the sequence nondecreasing; shifting the i-th smallest by i
    makes it strictly increasing, and the combinatorial number system ranks
    strictly increasing sequences by sum-of-binomials.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValidationError("cannot pack an empty multiset")
    for atom in atoms:
        if not (isinstance(atom, (int,)) or float(atom).is_integer()):
            raise ValidationError(f"atoms must be integers, got {atom!r}")
        if not 0 <= atom < B:
            raise ValidationError(f"atom {atom} out of alphabet [0, {B})")
    ordered = sorted(int(a) for a in atoms)
    rank = sum(math.comb(a + i, i + 1) for i, a in enumerate(ordered))
    return HistogramCode(rank=rank, s=len(ordered), B=B)


def histogram_unpack(code: HistogramCode) -> tuple[int, ...]:
    """The sorted multiset a HistogramCode ranks; inverse of histogram_pack."""
    rank = code.rank
    out = []
    for i in range(code.s, 0, -1):
        # Largest b with C(b, i) <= remaining rank; atom = b - (i-1).
        b = i - 1
        while math.comb(b + 1, i) <= rank and (b + 1) - (i - 1) < code.B:
            b += 1
        rank -= math.comb(b, i)
        out.append(b - (i - 1))
    if rank != 0:
        raise ValidationError(f"corrupt multiset rank in {code!r}")
    return tuple(reversed(out))


@dataclass(frozen=True)
class ExpectedBits:
    """Communication accounting: the envelope rate and (when exact) the true rate.

    ``envelope`` is T*(k/m)*s*(log2 e + log2((s+B-1)/s)) with B = 2^b; for
    s = 1 ``exact`` is the true expected cost T*(k/m)*b, otherwise None.
    """

    envelope: float
    exact: float | None


def expected_bits_per_client(params, b: float, T: int = 1) -> ExpectedBits:
    """Expected transmitted bits per client over T rounds for b-bit messages.

    A client pays only in rounds where it is sampled (probability k/m), and
    then sends s messages packed as a multiset over the 2^b-message alphabet.
    """
    if not b > 0:
        raise ValidationError(f"bits per message must be positive, got {b!r}")
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T!r}")
    big_b = 2.0**b
    envelope = T * params.q1 * params.s * (LOG2_E + math.log2((params.s + big_b - 1) / params.s))
    exact = T * params.q1 * b if params.s == 1 else None
    return ExpectedBits(envelope=envelope, exact=exact)


# ---------------------------------------------------------------------------
# Per-message framing
# ---------------------------------------------------------------------------


def _bits_to_bytes(bits: str) -> bytes:
    if any(b not in "01" for b in bits):
        raise ValidationError("payload must be a string of 0s and 1s")
    padded = bits + "0" * (-len(bits) % 8)
    return bytes(int(padded[i : i + 8], 2) for i in range(0, len(padded), 8)) if padded else b""


def _bytes_to_bits(data: bytes, nbits: int) -> str:
    full = "".join(format(byte, "08b") for byte in data)
    if len(full) < nbits:
        raise ValidationError("frame payload shorter than its declared bit length")
    return full[:nbits]


def _int_to_bits(value: int, nbits: int) -> str:
    if value < 0 or value >= (1 << nbits):
        raise ValidationError(f"value {value} does not fit in {nbits} bits")
    return format(value, f"0{nbits}b") if nbits else ""


def _sparse_payload(msg: mech.SparseSigned, d: int) -> str:
    atoms = [2 * c + (1 if s > 0 else 0) for c, s in msg.pairs]
    code = histogram_pack(atoms, 2 * d)
    return _int_to_bits(code.rank, code.bit_length)


def _sparse_from_payload(bits: str, d: int) -> mech.SparseSigned:
    nbits = multiset_bits(d, 2 * d)
    if len(bits) != nbits:
        raise ValidationError(f"expected {nbits} payload bits, got {len(bits)}")
    rank = int(bits, 2) if bits else 0
    atoms = histogram_unpack(HistogramCode(rank=rank, s=d, B=2 * d))
    pairs = tuple((a // 2, 1 if a % 2 else -1) for a in atoms)
    return mech.SparseSigned(pairs=pairs)


def message_payload_bits(msg: mech.MechanismMessage, spec: mech.MechanismSpec) -> int:
    """Exact payload bits the frame for this message will carry."""
    d = spec.ball.dim
    if isinstance(msg, mech.RawVector):
        return 64 * d
    if isinstance(msg, mech.MixTagged):
        if msg.arm == "L1":
            return index_sign_bits(mech.padded_dim(d))
        return multiset_bits(d, 2 * d)
    if isinstance(msg, mech.SparseSigned):
        return 0 if msg.is_zero else multiset_bits(d, 2 * d)
    if isinstance(msg, mech.IndexSign):
        family = mech.mechanism_family(spec)
        return index_sign_bits(mech.padded_dim(d) if family == "l1" else d)
    raise ValidationError(f"cannot size {type(msg).__name__}")


def frame_message(msg: mech.MechanismMessage, spec: mech.MechanismSpec) -> bytes:
    """[tag][bit length, 2 bytes BE][payload bits, zero-padded to bytes]."""
    d = spec.ball.dim
    if isinstance(msg, mech.RawVector):
        if len(msg.values) != d:
            raise ValidationError("raw message dimension mismatch")
        payload = b"".join(struct.pack(">d", v) for v in msg.values)
        nbits = 64 * d
        if nbits > 0xFFFF:
            raise ValidationError("raw payload exceeds the 16-bit frame length field")
        return bytes([TAG_RAW]) + struct.pack(">H", nbits) + payload
    if isinstance(msg, mech.MixTagged):
        if msg.arm == "L1":
            bits = encode_index_sign(msg.inner, mech.padded_dim(d))
            tag = TAG_MIX_L1
        else:
            if msg.inner.is_zero:
                raise ValidationError("the l2 arm of the mix never emits the zero message")
            bits = _sparse_payload(msg.inner, d)
            tag = TAG_MIX_L2
    elif isinstance(msg, mech.SparseSigned):
        if msg.is_zero:
            return bytes([TAG_ZERO]) + struct.pack(">H", 0)
        if len(msg.pairs) != d:
            raise ValidationError(f"expected {d} coordinate samples, got {len(msg.pairs)}")
        bits = _sparse_payload(msg, d)
        tag = TAG_L2_SPARSE
    elif isinstance(msg, mech.IndexSign):
        family = mech.mechanism_family(spec)
        if family == "l1":
            bits = encode_index_sign(msg, mech.padded_dim(d))
            tag = TAG_L1_ATOM
        elif family == "linf":
            bits = encode_index_sign(msg, d)
            tag = TAG_LINF_ATOM
        else:
            raise ValidationError(f"index-sign messages do not belong to the {family} family")
    else:
        raise ValidationError(f"cannot frame {type(msg).__name__}")
    if len(bits) > 0xFFFF:
        raise ValidationError("payload exceeds the 16-bit frame length field")
    return bytes([tag]) + struct.pack(">H", len(bits)) + _bits_to_bytes(bits)


def frame_length(data: bytes, offset: int = 0) -> int:
    """Total byte length of the frame starting at offset."""
    if len(data) < offset + 3:
        raise ValidationError("truncated frame header")
    (nbits,) = struct.unpack_from(">H", data, offset + 1)
    return 3 + (nbits + 7) // 8


def unframe_message(data: bytes, spec: mech.MechanismSpec, offset: int = 0):
    """Decode one frame; returns (message, bytes consumed)."""
    if len(data) < offset + 3:
        raise ValidationError("truncated frame header")
    tag = data[offset]
    (nbits,) = struct.unpack_from(">H", data, offset + 1)
    body = data[offset + 3 : offset + 3 + (nbits + 7) // 8]
    if len(body) < (nbits + 7) // 8:
        raise ValidationError("truncated frame payload")
    consumed = 3 + (nbits + 7) // 8
    d = spec.ball.dim
    if tag == TAG_ZERO:
        return mech.SparseSigned(pairs=tuple((0, 1) for _ in range(d)), is_zero=True), consumed
    if tag == TAG_RAW:
        if nbits != 64 * d:
            raise ValidationError("raw frame has the wrong payload size")
        values = struct.unpack(">" + "d" * d, body)
        return mech.RawVector(values=values), consumed
    bits = _bytes_to_bits(body, nbits)
    if tag == TAG_L1_ATOM:
        return decode_index_sign(bits, mech.padded_dim(d)), consumed
    if tag == TAG_LINF_ATOM:
        return decode_index_sign(bits, d), consumed
    if tag == TAG_L2_SPARSE:
        return _sparse_from_payload(bits, d), consumed
    if tag == TAG_MIX_L1:
        return mech.MixTagged("L1", decode_index_sign(bits, mech.padded_dim(d))), consumed
    if tag == TAG_MIX_L2:
        return mech.MixTagged("L2", _sparse_from_payload(bits, d)), consumed
    raise ValidationError(f"unknown frame tag 0x{tag:02x}")


# ---------------------------------------------------------------------------
# Per-client, per-round accounting
# ---------------------------------------------------------------------------


def client_payload_bits(messages, spec: mech.MechanismSpec) -> int:
    """Exact bits a client pays to send these messages in one round.

    A single message costs its own payload. Several index-sign messages from
    the same round are packed as one multiset over the 2d-atom alphabet (their
    order is discarded by the shuffler anyway); other message types are summed
    individually.
    """
    msgs = list(messages)
    if not msgs:
        return 0
    if len(msgs) == 1:
        return message_payload_bits(msgs[0], spec)
    if all(isinstance(m, mech.IndexSign) for m in msgs):
        d = spec.ball.dim
        dim = mech.padded_dim(d) if mech.mechanism_family(spec) == "l1" else d
        return multiset_bits(len(msgs), 2 * dim)
    return sum(message_payload_bits(m, spec) for m in msgs)


def client_round_bits_exact(spec: mech.MechanismSpec, s: int) -> int:
    """Deterministic per-selected-client cost of s messages, by family."""
    d = spec.ball.dim
    family = mech.mechanism_family(spec)
    if family in ("l1", "linf"):
        dim = mech.padded_dim(d) if family == "l1" else d
        if s == 1:
            return index_sign_bits(dim)
        return multiset_bits(s, 2 * dim)
    if family == "l2":
        return s * multiset_bits(d, 2 * d)
    raise ValidationError("the mix family has no deterministic per-round cost")
