import math
from fractions import Fraction
from typing import List, Tuple, Union

from permutest.utils.exceptions import ParseError

Number = Union[int, float, str, Fraction]


def to_fraction(value: Number) -> Fraction:
    """
    Converts user input into an exact rational.

    Strings are parsed as written, so "0.05" becomes 1/20 rather than the
    binary double closest to 0.05. Floats are converted through their
    shortest repr for the same reason.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ParseError(f"Expected a number, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ParseError(f"Expected a finite number, got {value!r}")
        return Fraction(repr(value))
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ParseError(f"Could not parse {value!r} as a rational number", cause=e)


def format_fraction(value: Fraction) -> str:
    """'num/den' form; integers keep the '/1' so the field is always a ratio"""
    return f"{value.numerator}/{value.denominator}"


def format_decimal(value: float, digits: int = 6) -> str:
    return f"{float(value):.{digits}g}"


def format_rational(value: Fraction, digits: int = 6) -> str:
    """
    Renders a rational the way reports show it, e.g. '1/6 (0.166667)'
    """
    return f"{format_fraction(value)} ({format_decimal(value, digits)})"


def split_top_level(text: str, sep: str = ",") -> List[str]:
    """
    Splits on `sep` but only outside parentheses, so that
    "normal(0,1),exp(1)" gives ["normal(0,1)", "exp(1)"].
    """
    parts, depth, current = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParseError(f"Unbalanced parentheses in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if depth != 0:
        raise ParseError(f"Unbalanced parentheses in {text!r}")
    parts.append("".join(current).strip())
    return [p for p in parts if p]


def parse_int_list(text: str) -> Tuple[int, ...]:
    """'101,201' -> (101, 201)"""
    try:
        return tuple(int(p) for p in split_top_level(text))
    except ValueError as e:
        raise ParseError(f"Could not parse {text!r} as a list of integers", cause=e)


def parse_rational_list(text: str) -> Tuple[Fraction, ...]:
    """'1/2,1/2' or '0.5,0.5' -> (Fraction(1, 2), Fraction(1, 2))"""
    return tuple(to_fraction(p) for p in split_top_level(text))


def multinomial_coefficient(sizes) -> int:
    """C(N; n_1, ..., n_k) computed with exact integers"""
    total, remaining = 1, sum(sizes)
    for n in sizes:
        total *= math.comb(remaining, n)
        remaining -= n
    return total
