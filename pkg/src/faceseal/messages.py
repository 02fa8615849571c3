"""Fixed-length binary messages and their hex wire format.

A message is a vector of message_bits bits (default 32). The external
representation is a lowercase hex string, most-significant bit first, so a
32-bit message is exactly 8 hex characters.
"""

from __future__ import annotations

import numpy as np

from .validation import check_bits

DEFAULT_MESSAGE_BITS = 32


def random_message(n_bits: int, rng: np.random.Generator) -> np.ndarray:
    if n_bits <= 0:
        raise ValueError("n_bits must be positive")
    return rng.integers(0, 2, size=n_bits, dtype=np.int64)


def message_to_hex(bits) -> str:
    """Encode a bit vector as a lowercase hex string (MSB first)."""
    arr = check_bits(bits)
    if arr.ndim != 1:
        raise ValueError("expected a single message, not a batch")
    if arr.size % 8 != 0:
        raise ValueError(f"hex form requires a multiple of 8 bits, got {arr.size}")
    value = 0
    for b in arr:
        value = (value << 1) | int(b)
    return format(value, f"0{arr.size // 4}x")


def hex_to_message(text: str, n_bits: int = DEFAULT_MESSAGE_BITS) -> np.ndarray:
    """Decode a hex string into a bit vector of n_bits (MSB first)."""
    if n_bits % 8 != 0:
        raise ValueError(f"hex form requires a multiple of 8 bits, got {n_bits}")
    expected_chars = n_bits // 4
    text = text.strip().lower()
    if len(text) != expected_chars:
        raise ValueError(f"expected {expected_chars} hex characters for {n_bits} bits, got {len(text)!r}")
    try:
        value = int(text, 16)
    except ValueError:
        raise ValueError(f"malformed hex message {text!r}") from None
    return np.array([(value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)], dtype=np.int64)
