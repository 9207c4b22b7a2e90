"""Minimal ELF symbol-table reader.

Parses just enough of a little-endian ELF32/ELF64 image to pull function and
object symbols out of its SYMTAB/DYNSYM sections.  Every offset is checked
against the image bounds before use: corrupt input raises one of the error
types below, never an uncaught slice or struct failure.  No relocation,
demangling or debug-info handling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BootscopeError

_SHT_SYMTAB = 2
_SHT_DYNSYM = 11
_STT_OBJECT = 1
_STT_FUNC = 2


class ElfError(BootscopeError):
    pass


class NotElf(ElfError):
    pass


class UnsupportedEndianness(ElfError):
    pass


class CorruptSectionTable(ElfError):
    """A header, section or symbol record points outside the image."""


@dataclass(frozen=True)
class RawSymbol:
    name: str
    value: int
    size: int
    type_: int  # STT_* number


@dataclass(frozen=True)
class _Section:
    type_: int
    offset: int
    size: int
    link: int
    entsize: int


def _u16(image: bytes, off: int) -> int:
    return struct.unpack_from("<H", image, off)[0]


def _u32(image: bytes, off: int) -> int:
    return struct.unpack_from("<I", image, off)[0]


def _u64(image: bytes, off: int) -> int:
    return struct.unpack_from("<Q", image, off)[0]


def _check_range(image: bytes, off: int, size: int, what: str) -> None:
    if off < 0 or size < 0 or off + size > len(image):
        raise CorruptSectionTable(f"{what} [{off:#x}, +{size:#x}) exceeds image of {len(image)} bytes")


def read_symbols(image: bytes) -> list[RawSymbol]:
    """Return every FUNC/OBJECT symbol found in the image's symbol tables."""
    if len(image) < 6 or image[:4] != b"\x7fELF":
        raise NotElf("missing ELF magic")
    ei_class, ei_data = image[4], image[5]
    if ei_data == 2:
        raise UnsupportedEndianness("big-endian images are not supported")
    if ei_data != 1:
        raise NotElf(f"unknown EI_DATA value {ei_data}")
    if ei_class == 1:
        is64 = False
    elif ei_class == 2:
        is64 = True
    else:
        raise NotElf(f"unknown EI_CLASS value {ei_class}")

    ehsize = 64 if is64 else 52
    _check_range(image, 0, ehsize, "ELF header")
    if is64:
        shoff = _u64(image, 0x28)
        shentsize = _u16(image, 0x3A)
        shnum = _u16(image, 0x3C)
        min_shentsize, min_syment = 64, 24
    else:
        shoff = _u32(image, 0x20)
        shentsize = _u16(image, 0x2E)
        shnum = _u16(image, 0x30)
        min_shentsize, min_syment = 40, 16

    if shoff == 0 or shnum == 0:
        return []
    if shentsize < min_shentsize:
        raise CorruptSectionTable(f"section header entry size {shentsize} too small")
    _check_range(image, shoff, shnum * shentsize, "section header table")

    sections: list[_Section] = []
    for i in range(shnum):
        base = shoff + i * shentsize
        if is64:
            sections.append(
                _Section(
                    type_=_u32(image, base + 0x04),
                    offset=_u64(image, base + 0x18),
                    size=_u64(image, base + 0x20),
                    link=_u32(image, base + 0x28),
                    entsize=_u64(image, base + 0x38),
                )
            )
        else:
            sections.append(
                _Section(
                    type_=_u32(image, base + 0x04),
                    offset=_u32(image, base + 0x10),
                    size=_u32(image, base + 0x14),
                    link=_u32(image, base + 0x18),
                    entsize=_u32(image, base + 0x24),
                )
            )

    symbols: list[RawSymbol] = []
    for sec in sections:
        if sec.type_ not in (_SHT_SYMTAB, _SHT_DYNSYM):
            continue  # not a table we understand; skip
        _check_range(image, sec.offset, sec.size, "symbol table section")
        entsize = sec.entsize or min_syment
        if entsize < min_syment:
            raise CorruptSectionTable(f"symbol entry size {entsize} too small")
        if sec.link >= len(sections):
            raise CorruptSectionTable(f"symbol table links to section {sec.link} of {len(sections)}")
        strtab = sections[sec.link]
        _check_range(image, strtab.offset, strtab.size, "string table section")
        names = image[strtab.offset : strtab.offset + strtab.size]

        for off in range(sec.offset, sec.offset + sec.size - entsize + 1, entsize):
            if is64:
                st_name = _u32(image, off)
                st_info = image[off + 4]
                st_value = _u64(image, off + 8)
                st_size = _u64(image, off + 16)
            else:
                st_name = _u32(image, off)
                st_value = _u32(image, off + 4)
                st_size = _u32(image, off + 8)
                st_info = image[off + 12]
            st_type = st_info & 0xF
            if st_type not in (_STT_OBJECT, _STT_FUNC):
                continue
            if st_name >= len(names):
                raise CorruptSectionTable(f"symbol name offset {st_name:#x} outside string table")
            end = names.find(b"\x00", st_name)
            if end < 0:
                end = len(names)
            name = names[st_name:end].decode("utf-8", errors="replace")
            if not name:
                continue
            symbols.append(RawSymbol(name=name, value=st_value, size=st_size, type_=st_type))
    return symbols
