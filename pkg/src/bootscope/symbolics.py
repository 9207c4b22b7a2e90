"""Address <-> symbol <-> source line resolution.

Three input shapes feed the same two lookup tables:

* an ELF image (its symbol tables, via :mod:`bootscope.elf`),
* an ``nm``-style text map, one ``address kind name`` row per line,
* a line map, one ``hexaddress<TAB>file<TAB>line`` row per line — the
  toolkit's stand-in for compiler debug info.

Lookups use nearest-preceding-address semantics: a query resolves to the
greatest table address that does not exceed it.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from enum import Enum

from . import elf
from .errors import BootscopeError

log = logging.getLogger(__name__)

_FUNCTION_LETTERS = frozenset("tT")
_OBJECT_LETTERS = frozenset("dDbBrR")


class SymbolicsError(BootscopeError):
    pass


class ParseError(SymbolicsError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownSymbol(SymbolicsError):
    pass


class UnknownLine(SymbolicsError):
    pass


class SymbolKind(Enum):
    FUNCTION = "function"
    OBJECT = "object"
    OTHER = "other"


@dataclass(frozen=True)
class Symbol:
    name: str
    address: int
    size: int | None = None
    kind: SymbolKind = SymbolKind.OTHER


@dataclass(frozen=True)
class LineRow:
    address: int
    file: str
    line: int


@dataclass(frozen=True)
class Location:
    """Where an address falls: nearest symbol at or below it, plus source line."""

    address: int
    symbol: str | None = None
    offset: int = 0
    file: str | None = None
    line: int | None = None

    def describe(self) -> str:
        parts = [f"{self.address:#010x}"]
        if self.symbol is not None:
            parts.append(self.symbol if self.offset == 0 else f"{self.symbol}+{self.offset:#x}")
        else:
            parts.append("(no symbol)")
        if self.file is not None:
            parts.append(f"{self.file}:{self.line}")
        return " ".join(parts)


class SymbolIndex:
    """Symbols sorted by address, with bisect lookups both ways."""

    def __init__(self, entries: list[Symbol], warnings: list[str] | None = None):
        seen: set[tuple[int, str]] = set()
        unique = []
        for sym in entries:
            key = (sym.address, sym.name)
            if key in seen:
                continue
            seen.add(key)
            unique.append(sym)
        self.entries: list[Symbol] = sorted(unique, key=lambda s: (s.address, s.name))
        self.warnings: list[str] = list(warnings or [])
        self._addresses = [s.address for s in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, addr: int) -> Symbol | None:
        """Entry with the greatest address <= addr, or None."""
        i = bisect.bisect_right(self._addresses, addr)
        if i == 0:
            return None
        return self.entries[i - 1]

    def by_name(self, name: str) -> Symbol:
        matches = [s for s in self.entries if s.name == name]
        if not matches:
            raise UnknownSymbol(name)
        if len(matches) > 1:
            log.warning("symbol %r defined at %d addresses, using %#x",
                        name, len(matches), matches[0].address)
        return matches[0]


class LineMap:
    """Address-sorted (address, file, line) rows."""

    def __init__(self, rows: list[LineRow], warnings: list[str] | None = None):
        self.rows: list[LineRow] = sorted(rows, key=lambda r: r.address)
        self.warnings: list[str] = list(warnings or [])
        self._addresses = [r.address for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, addr: int) -> LineRow | None:
        """Row with the greatest address <= addr, or None."""
        i = bisect.bisect_right(self._addresses, addr)
        if i == 0:
            return None
        return self.rows[i - 1]

    def address_of(self, file: str, line: int) -> int:
        """Lowest address mapped exactly to (file, line)."""
        for row in self.rows:
            if row.file == file and row.line == line:
                return row.address
        raise UnknownLine(f"{file}:{line} has no address mapping")

    def lines_for_file(self, file: str) -> list[int]:
        """Distinct mapped line numbers for one file, ascending."""
        return sorted({row.line for row in self.rows if row.file == file})


def load_elf_symbols(image: bytes) -> SymbolIndex:
    """Build a SymbolIndex from an ELF image's FUNC/OBJECT symbols."""
    kind_by_type = {1: SymbolKind.OBJECT, 2: SymbolKind.FUNCTION}
    entries = [
        Symbol(
            name=raw.name,
            address=raw.value,
            size=raw.size or None,
            kind=kind_by_type[raw.type_],
        )
        for raw in elf.read_symbols(image)
    ]
    return SymbolIndex(entries)


def _kind_for_letter(letter: str) -> SymbolKind:
    if letter in _FUNCTION_LETTERS:
        return SymbolKind.FUNCTION
    if letter in _OBJECT_LETTERS:
        return SymbolKind.OBJECT
    return SymbolKind.OTHER


def load_symbol_map(text: str) -> SymbolIndex:
    """Parse ``nm``-style rows: hex address, one-letter kind, name."""
    entries = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(None, 2)
        if len(parts) != 3:
            raise ParseError(line_no, f"expected 'address kind name', got {line!r}")
        addr_text, kind_text, name = parts
        try:
            address = int(addr_text, 16)
        except ValueError:
            raise ParseError(line_no, f"bad hex address {addr_text!r}") from None
        if len(kind_text) != 1:
            raise ParseError(line_no, f"kind must be one letter, got {kind_text!r}")
        entries.append(Symbol(name=name, address=address, kind=_kind_for_letter(kind_text)))
    return SymbolIndex(entries)


def load_line_map(text: str) -> LineMap:
    """Parse tab-separated rows ``hexaddress<TAB>file<TAB>line``.

    Duplicate addresses keep the later row; the overwrite is recorded as a
    warning on the returned map.
    """
    by_addr: dict[int, LineRow] = {}
    warnings: list[str] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(line_no, f"expected 'address<TAB>file<TAB>line', got {line!r}")
        addr_text, file, line_text = parts
        try:
            address = int(addr_text, 16)
        except ValueError:
            raise ParseError(line_no, f"bad hex address {addr_text!r}") from None
        try:
            lineno = int(line_text)
        except ValueError:
            raise ParseError(line_no, f"bad line number {line_text!r}") from None
        if lineno < 1:
            raise ParseError(line_no, f"line numbers start at 1, got {lineno}")
        if address in by_addr:
            warnings.append(
                f"line {line_no}: duplicate address {address:#x}, keeping the later row"
            )
        by_addr[address] = LineRow(address=address, file=file.strip(), line=lineno)
    return LineMap(list(by_addr.values()), warnings)


def resolve_addr(index: SymbolIndex, line_map: LineMap, addr: int) -> Location:
    """Resolve an address to the nearest symbol and line row at or below it."""
    sym = index.lookup(addr)
    row = line_map.lookup(addr)
    return Location(
        address=addr,
        symbol=sym.name if sym else None,
        offset=addr - sym.address if sym else 0,
        file=row.file if row else None,
        line=row.line if row else None,
    )


def resolve_symbol(index: SymbolIndex, name: str) -> int:
    """Address of the named symbol (lowest address wins on duplicates)."""
    return index.by_name(name).address
