import hashlib
import json
from typing import Dict, List, Tuple

# Sieve capacity; larger tables are refused rather than half-built
MAX_SIEVE = 2 * 10 ** 8

# Largest residue weight sum(q * l_q) + sum(q * lbar_q) we expand exactly
MAX_RESIDUE_WEIGHT = 8


class KappaError(Exception):
    """Base class for every domain failure raised by the toolkit."""


class DomainError(KappaError):
    """Argument outside the domain of the operation."""


class DimensionError(KappaError):
    """Tables or vectors of mismatched size."""


class ConfigError(KappaError):
    """Invalid specification, polynomial or config file."""


class ResourceError(KappaError):
    """Request would exceed the sizes the toolkit handles."""


class DivergenceError(KappaError):
    """Euler product evaluated outside its region of absolute convergence."""


class UnsupportedIndexError(KappaError):
    """Derivative multi-index missing from the closed-form catalog."""


class InconsistencyError(KappaError):
    """Internal invariant broken."""


def fmt_float(x: float) -> str:
    """Format a real with round-trip precision."""
    return format(float(x), ".17g")


def parse_int_list(text: str) -> Tuple[int, ...]:
    """Parse '1,2,0' into (1, 2, 0); an empty string gives ()."""
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise DomainError(f"Expected comma-separated integers, got '{text}'")


def parse_spec_flag(text: str) -> Dict[str, object]:
    """
    Parse a convolution spec flag such as 'd=1,l=2' or 'd=2,l=1-1,sf'.

    Exponent vectors use '-' between entries so that ',' can separate fields.

    Returns:
        dict with keys d, exponents, squarefree
    """
    fields: Dict[str, object] = {"d": None, "exponents": (), "squarefree": False}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part in ("sf", "squarefree"):
            fields["squarefree"] = True
            continue
        if "=" not in part:
            raise DomainError(f"Bad spec field '{part}' in '{text}'")
        key, value = part.split("=", 1)
        if key == "d":
            fields["d"] = int(value)
        elif key == "l":
            fields["exponents"] = tuple(int(v) for v in value.split("-")) if value else ()
        else:
            raise DomainError(f"Unknown spec field '{key}'")
    if fields["d"] is None:
        fields["d"] = len(fields["exponents"])
    return fields


def parse_multi_index(text: str) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """
    Parse a derivative index into (z-orders, w-orders).

    '1,2;1,1' lists z-orders then w-orders; the two-entry shorthand '1,1'
    means one z of order 1 and one w of order 1.
    """
    if ";" in text:
        left, right = text.split(";", 1)
        return parse_int_list(left), parse_int_list(right)
    entries = parse_int_list(text)
    if len(entries) != 2:
        raise DomainError(f"Index '{text}' needs ';' between z and w orders")
    return (entries[0],), (entries[1],)


def parse_cutoff(text: str) -> int:
    """Accept '1e8' as well as '100000000'."""
    try:
        value = float(text)
    except ValueError:
        raise DomainError(f"Bad cutoff '{text}'")
    if value != int(value):
        raise DomainError(f"Cutoff must be an integer, got '{text}'")
    return int(value)


def digest(payload: Dict) -> str:
    """SHA-1 of the canonical JSON encoding of payload."""
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(encoded.encode("utf-8")).hexdigest()


def trim_zeros(vector: List[int]) -> Tuple[int, ...]:
    """Drop trailing zeros of an exponent vector."""
    end = len(vector)
    while end and vector[end - 1] == 0:
        end -= 1
    return tuple(vector[:end])
