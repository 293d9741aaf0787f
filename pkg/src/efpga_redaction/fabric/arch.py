"""Architecture parameters and the fracturable-LUT reference model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence


class ArchError(ValueError):
    pass


def derive_clb_inputs(k: int, n: int) -> int:
    """Number of CLB input pins for ``n`` BLEs of ``k``-input LUTs: ceil(k(n+1)/2)."""
    if k < 2 or n < 1:
        raise ArchError("need K >= 2 and N >= 1")
    return (k * (n + 1) + 1) // 2


def fc_tracks(fc: float, width: int) -> int:
    """Tracks reached by a pin: round-half-up(fc * W), at least one."""
    return max(1, math.floor(fc * width + 0.5))


@dataclass(frozen=True)
class ArchParams:
    k: int = 4
    ble_kind: str = "LUT"          # "LUT" or "FLUT"
    n: int = 1
    grid_w: int = 1
    grid_h: int = 1
    io_per_tile: int = 1
    w: int | None = None           # None means Auto (searched by the router)
    fc_in: float = 0.15
    fc_out: float = 0.1
    fs: int = 3
    l: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.ble_kind not in ("LUT", "FLUT"):
            raise ArchError(f"ble_kind must be LUT or FLUT, got {self.ble_kind!r}")
        if self.k < 2 or (self.ble_kind == "FLUT" and self.k < 3):
            raise ArchError("K too small for this BLE kind")
        if not 1 <= self.n <= 9:
            raise ArchError("N must lie in [1, 9]")
        if self.grid_w < 1 or self.grid_h < 1:
            raise ArchError("grid must be at least 1x1")
        if self.io_per_tile < 1:
            raise ArchError("io_per_tile must be >= 1")
        if self.w is not None and (self.w < 2 or self.w % 2):
            raise ArchError("channel width must be an even number >= 2")
        if not (0 < self.fc_in <= 1 and 0 < self.fc_out <= 1):
            raise ArchError("Fc fractions must lie in (0, 1]")
        if self.fs < 1 or self.l < 1:
            raise ArchError("Fs and L must be >= 1")

    @property
    def i(self) -> int:
        return derive_clb_inputs(self.k, self.n)

    @property
    def outputs_per_ble(self) -> int:
        return 2 if self.ble_kind == "FLUT" else 1

    @property
    def perimeter_tiles(self) -> int:
        return 2 * (self.grid_w + self.grid_h)

    @property
    def n_pads(self) -> int:
        return self.io_per_tile * self.perimeter_tiles

    @property
    def n_clbs(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def name(self) -> str:
        core = f"K{self.k}_frac_N{self.n}" if self.ble_kind == "FLUT" else f"K{self.k}N{self.n}"
        return f"{self.grid_w}x{self.grid_h} {core}"

    def with_(self, **changes) -> "ArchParams":
        return replace(self, **changes)

    # -- architecture description file ------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["w"] = "auto" if self.w is None else self.w
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchParams":
        d = {k.lower(): v for k, v in d.items()}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ArchError(f"unknown architecture fields: {sorted(unknown)}")
        if "w" in d and (d["w"] is None or str(d["w"]).lower() == "auto"):
            d["w"] = None
        conv = {"k": int, "n": int, "grid_w": int, "grid_h": int, "io_per_tile": int,
                "w": lambda v: None if v is None else int(v), "fc_in": float, "fc_out": float,
                "fs": int, "l": int, "ble_kind": lambda v: str(v).upper()}
        return cls(**{k: conv[k](v) for k, v in d.items()})


def load_arch(path) -> ArchParams:
    """Read an architecture file: JSON object or flat ``key = value`` lines."""
    text = Path(path).read_text()
    try:
        return ArchParams.from_dict(json.loads(text))
    except json.JSONDecodeError:
        pass
    d = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArchError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        d[key] = val
    return ArchParams.from_dict(d)


def dump_arch(p: ArchParams) -> str:
    return "".join(f"{k} = {v}\n" for k, v in p.to_dict().items())


def evaluate_flut(table: int, mode_bit: int, inputs: Sequence[int], k: int) -> tuple[int, ...]:
    """Reference model of a fracturable K-LUT.

    Whole mode (``mode_bit`` 0): one output, ``table[idx]`` for the K-bit
    input index.  Fractured mode: two outputs over the same K-1 inputs,
    read from the low and high halves of the table.
    """
    if k < 3:
        raise ArchError("a fracturable LUT needs K >= 3")
    if mode_bit == 0:
        if len(inputs) != k:
            raise ArchError(f"whole mode takes {k} inputs")
        idx = sum((b & 1) << i for i, b in enumerate(inputs))
        return ((table >> idx) & 1,)
    ins = list(inputs)[: k - 1]
    if len(ins) != k - 1:
        raise ArchError(f"fractured mode takes {k - 1} inputs")
    idx = sum((b & 1) << i for i, b in enumerate(ins))
    half = 1 << (k - 1)
    return ((table >> idx) & 1, (table >> (half + idx)) & 1)
