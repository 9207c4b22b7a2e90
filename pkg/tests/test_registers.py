from __future__ import annotations

import pytest

from bootscope.registers import MalformedRegisterPayload, RegisterFile, RegisterLayout


class TestLayout:
    def test_i386_geometry(self):
        layout = RegisterLayout.i386()
        assert len(layout.names) == 16
        assert layout.hex_len == 128
        assert layout.pc_name == "EIP"

    def test_pc_must_exist(self):
        with pytest.raises(ValueError):
            RegisterLayout(names=("A",), widths=(32,), pc_name="PC")

    def test_from_json(self):
        layout = RegisterLayout.from_json(
            '{"pc": "PC", "registers": [{"name": "A", "bits": 16}, {"name": "PC"}]}'
        )
        assert layout.widths == (16, 32)
        assert layout.hex_len == 12


class TestCodec:
    def test_round_trip(self):
        layout = RegisterLayout.i386()
        regs = RegisterFile(layout, {"EIP": 0x7C00, "ESP": 0x8F00})
        decoded = RegisterFile.decode(layout, regs.encode())
        assert decoded.values == regs.values
        assert decoded.pc == 0x7C00

    def test_little_endian_packing(self):
        layout = RegisterLayout(names=("R",), widths=(32,), pc_name="R")
        assert RegisterFile(layout, {"R": 0x12345678}).encode() == b"78563412"

    def test_all_zero_payload(self):
        layout = RegisterLayout.i386()
        regs = RegisterFile.decode(layout, b"0" * 128)
        assert all(v == 0 for v in regs.values.values())

    def test_short_payload_rejected(self):
        layout = RegisterLayout.i386()
        with pytest.raises(MalformedRegisterPayload):
            RegisterFile.decode(layout, b"0" * 127)

    def test_non_hex_rejected(self):
        layout = RegisterLayout.i386()
        with pytest.raises(MalformedRegisterPayload):
            RegisterFile.decode(layout, b"zz" + b"0" * 126)
