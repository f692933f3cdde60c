"""Fixed-point encoding of reals into a ring of integers.

Values are scaled by 2^frac_bits, rounded and reduced modulo ``modulus``; decoding
centre-lifts into [−modulus/2, modulus/2) before unscaling. Arrays of ring elements
are numpy object arrays of Python ints, so products never overflow.
"""

from dataclasses import dataclass

import numpy as np

from vpgmm.errors import ContractViolationError


@dataclass(frozen=True)
class FixedPointCodec:
    """Codec between float arrays and ring elements.

    Attributes:
        frac_bits: Fractional bits of the encoding (scale 2^frac_bits)
        modulus: Ring modulus
    """

    frac_bits: int = 40
    modulus: int = 1 << 128

    def __post_init__(self) -> None:
        if self.frac_bits <= 0:
            raise ContractViolationError(f"frac_bits must be positive, got {self.frac_bits}")
        if self.modulus <= (1 << (self.frac_bits + 1)):
            raise ContractViolationError(
                f"modulus {self.modulus} leaves no integer range at {self.frac_bits} fractional bits"
            )

    @classmethod
    def with_ring_bits(cls, frac_bits: int, ring_bits: int) -> "FixedPointCodec":
        return cls(frac_bits, 1 << ring_bits)

    @classmethod
    def for_real_modulus(cls, frac_bits: int, modulus: float) -> "FixedPointCodec":
        """Codec whose integer modulus represents the real modulus ``modulus``."""
        return cls(frac_bits, int(round(modulus * (1 << frac_bits))))

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def half(self) -> int:
        return self.modulus // 2

    def encode(self, values: float | np.ndarray) -> np.ndarray:
        """Encode reals as ring elements in [0, modulus)."""
        values = np.asarray(values, dtype=float)
        out = np.empty(values.shape, dtype=object)
        for idx, value in np.ndenumerate(values):
            out[idx] = int(round(float(value) * self.scale)) % self.modulus
        return out

    def reduce(self, ints: np.ndarray) -> np.ndarray:
        return np.asarray(ints, dtype=object) % self.modulus

    def center_lift(self, ints: np.ndarray) -> np.ndarray:
        """Map ring elements into [−modulus/2, modulus/2)."""
        ints = self.reduce(ints)
        return np.where(ints >= self.half, ints - self.modulus, ints)

    def decode(self, ints: np.ndarray, scale_power: int = 1) -> np.ndarray:
        """Decode ring elements carrying ``scale_power`` factors of the scale."""
        lifted = self.center_lift(ints)
        divisor = self.scale**scale_power
        out = np.empty(lifted.shape, dtype=float)
        for idx, value in np.ndenumerate(lifted):
            out[idx] = int(value) / divisor
        return out

    def random(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        """Ring elements drawn (near-)uniformly from [0, modulus)."""
        words = self.modulus.bit_length() // 32 + 2
        limbs = rng.integers(0, 1 << 32, size=(*shape, words), dtype=np.uint64)
        acc = np.zeros(shape, dtype=object)
        for w in range(words):
            acc = acc * (1 << 32) + limbs[..., w].astype(object)
        return acc % self.modulus
