"""Parsing of unit-suffixed literals used in config files.

Every frequency-like quantity is stored as an angular frequency in rad/s.

Grammar (whitespace ignored, case-sensitive suffixes)::

    value     := ["2pi*"] number [unit]
    unit      := freq | time | freq "/" time | "rad/s"
    freq      := "Hz" | "kHz" | "MHz" | "GHz"
    time      := "s" | "ms" | "us" | "ns"

* A frequency suffix denotes cycles per second and is converted with a
  factor 2*pi: ``"1MHz"`` -> ``2*pi*1e6`` rad/s.
* The ``2pi*`` prefix on a frequency literal is the laboratory notation
  ``2 pi x 100 kHz`` for the same quantity and does not multiply again:
  ``"2pi*100kHz" == "100kHz"``.
* ``2pi*`` on a bare number multiplies by 2*pi (``"2pi*3" -> 6.283...``).
* A bare number is taken in SI units (rad/s, s, rad/s^2).
* ``"50kHz/ms"`` is a ramp rate in rad/s^2.
"""

from __future__ import annotations

import math
import re

__all__ = ["UnitError", "parse_quantity", "parse_frequency", "parse_time", "parse_ramp_rate"]

TWO_PI = 2.0 * math.pi

FREQ_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}

_LITERAL = re.compile(
    r"^(?P<twopi>2pi\*)?(?P<num>[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)(?P<unit>[A-Za-z/]*)$"
)


class UnitError(ValueError):
    pass


def parse_quantity(text: str | float | int) -> tuple[float, str]:
    """Return ``(si_value, kind)`` with kind in freq/time/rate/number."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text), "number"
    raw = str(text).replace(" ", "")
    match = _LITERAL.match(raw)
    if not match:
        raise UnitError(f"cannot parse quantity {text!r}")
    value = float(match["num"])
    unit = match["unit"]
    twopi = bool(match["twopi"])
    if not unit:
        return (value * TWO_PI if twopi else value), "number"
    if unit == "rad/s":
        if twopi:
            raise UnitError(f"'2pi*' cannot be combined with rad/s in {text!r}")
        return value, "freq"
    if unit in FREQ_UNITS:
        return value * FREQ_UNITS[unit] * TWO_PI, "freq"
    if unit in TIME_UNITS:
        if twopi:
            raise UnitError(f"'2pi*' is not meaningful on a time in {text!r}")
        return value * TIME_UNITS[unit], "time"
    if "/" in unit:
        num_unit, _, den_unit = unit.partition("/")
        if num_unit in FREQ_UNITS and den_unit in TIME_UNITS:
            return value * FREQ_UNITS[num_unit] * TWO_PI / TIME_UNITS[den_unit], "rate"
    raise UnitError(f"unknown unit {unit!r} in {text!r}")


def _expect(text, allowed: set[str], what: str) -> float:
    value, kind = parse_quantity(text)
    if kind not in allowed:
        raise UnitError(f"{text!r} is a {kind}, expected a {what}")
    return value


def parse_frequency(text) -> float:
    """Angular frequency in rad/s (also used for decay rates in 1/s)."""
    return _expect(text, {"freq", "number"}, "frequency")


def parse_time(text) -> float:
    return _expect(text, {"time", "number"}, "time")


def parse_ramp_rate(text) -> float:
    return _expect(text, {"rate", "number"}, "ramp rate (frequency/time)")
