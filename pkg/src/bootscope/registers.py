"""Target register descriptions and ``g``/``G`` payload codecs.

A layout is data, not code: name each register, give its bit width, and say
which one is the program counter.  The stock layout is the 16-register
32-bit x86 set used by emulator stubs for early boot debugging.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import BootscopeError

I386_REGISTERS = (
    "EAX", "ECX", "EDX", "EBX", "ESP", "EBP", "ESI", "EDI",
    "EIP", "EFLAGS", "CS", "SS", "DS", "ES", "FS", "GS",
)


class MalformedRegisterPayload(BootscopeError):
    pass


@dataclass(frozen=True)
class RegisterLayout:
    names: tuple[str, ...]
    widths: tuple[int, ...]  # bits, multiples of 8
    pc_name: str

    def __post_init__(self):
        if len(self.names) != len(self.widths):
            raise ValueError("names and widths differ in length")
        if self.pc_name not in self.names:
            raise ValueError(f"pc register {self.pc_name!r} not in layout")
        if any(w % 8 for w in self.widths):
            raise ValueError("register widths must be whole bytes")

    @property
    def hex_len(self) -> int:
        """Length of a full ``g`` payload in hex characters."""
        return sum(self.widths) // 4

    @classmethod
    def i386(cls) -> "RegisterLayout":
        return cls(names=I386_REGISTERS, widths=(32,) * 16, pc_name="EIP")

    @classmethod
    def from_json(cls, text: str) -> "RegisterLayout":
        """Load ``{"pc": name, "registers": [{"name": n, "bits": w}, ...]}``."""
        doc = json.loads(text)
        regs = doc["registers"]
        return cls(
            names=tuple(r["name"] for r in regs),
            widths=tuple(int(r.get("bits", 32)) for r in regs),
            pc_name=doc["pc"],
        )


@dataclass
class RegisterFile:
    layout: RegisterLayout
    values: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.layout.names:
            self.values.setdefault(name, 0)

    @property
    def pc(self) -> int:
        return self.values[self.layout.pc_name]

    def encode(self) -> bytes:
        """Hex ``g`` payload: each register little-endian, in layout order."""
        out = []
        for name, width in zip(self.layout.names, self.layout.widths):
            value = self.values[name] & ((1 << width) - 1)
            out.append(value.to_bytes(width // 8, "little").hex())
        return "".join(out).encode("ascii")

    @classmethod
    def decode(cls, layout: RegisterLayout, payload: bytes) -> "RegisterFile":
        text = payload.decode("ascii", errors="replace")
        if len(text) != layout.hex_len:
            raise MalformedRegisterPayload(
                f"'g' payload is {len(text)} hex chars, layout needs {layout.hex_len}"
            )
        values = {}
        pos = 0
        for name, width in zip(layout.names, layout.widths):
            chunk = text[pos : pos + width // 4]
            pos += width // 4
            try:
                values[name] = int.from_bytes(bytes.fromhex(chunk), "little")
            except ValueError:
                raise MalformedRegisterPayload(f"non-hex digits in register {name}: {chunk!r}") from None
        return cls(layout=layout, values=values)
