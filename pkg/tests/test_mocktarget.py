from __future__ import annotations

import socket

import pytest

from bootscope import mocktarget, rsp
from bootscope.mocktarget import (
    BOOT_SECTOR,
    FIXTURE_MEMORY_BASE,
    FIXTURE_MILESTONES,
    PARTITION_RECORD_COUNT,
    PARTITION_RECORD_SIZE,
    PARTITION_TABLE_OFFSET,
    TargetScript,
    build_boot_fixture,
)

from conftest import link_to


class TestBootFixture:
    def test_boot_sector_signature(self):
        script = build_boot_fixture()
        off = BOOT_SECTOR + 0x1FE - FIXTURE_MEMORY_BASE
        assert script.memory[off : off + 2] == b"\x55\xaa"

    def test_partition_table_geometry(self):
        script = build_boot_fixture()
        table_off = BOOT_SECTOR + PARTITION_TABLE_OFFSET - FIXTURE_MEMORY_BASE
        table = script.memory[table_off : table_off + PARTITION_RECORD_COUNT * PARTITION_RECORD_SIZE]
        assert len(table) == 64
        # Record 0 is a bootable FreeBSD slice; the other three are empty.
        assert table[0] == 0xA5 and table[1] == 0x80
        assert table[16:64].count(0) == 48
        # The table ends exactly where the signature begins.
        assert PARTITION_TABLE_OFFSET + 64 == 0x1FE

    def test_trace_passes_milestones_in_order(self):
        script = build_boot_fixture()
        milestone_addrs = set(FIXTURE_MILESTONES.values())
        hits = [pc for pc in script.trace if pc in milestone_addrs]
        assert hits == [
            FIXTURE_MILESTONES["boot0"],
            FIXTURE_MILESTONES["boot2"],
            FIXTURE_MILESTONES["loader"],
            FIXTURE_MILESTONES["init386"],
        ]

    def test_entry_is_first_trace_pc(self):
        script = build_boot_fixture()
        assert script.entry_pc == script.trace[0]

    def test_script_invariants(self):
        with pytest.raises(ValueError):
            TargetScript(memory_base=0, memory=b"\x00" * 16, entry_pc=0, trace=[])
        with pytest.raises(ValueError):
            TargetScript(memory_base=0, memory=b"\x00" * 16, entry_pc=4, trace=[0, 4])
        with pytest.raises(ValueError):
            TargetScript(memory_base=0, memory=b"\x00" * 16, entry_pc=0, trace=[0, 0x999])
        TargetScript(
            memory_base=0, memory=b"\x00" * 16, entry_pc=0, trace=[0, 0x999],
            external_pcs=frozenset({0x999}),
        )

    def test_save_load_round_trip(self, tmp_path):
        script = build_boot_fixture(z0_supported=False, packet_size=512)
        path = script.save(tmp_path)
        loaded = TargetScript.load(path)
        assert loaded.memory == script.memory
        assert loaded.trace == script.trace
        assert loaded.entry_pc == script.entry_pc
        assert loaded.z0_supported is False
        assert loaded.packet_size == 512
        assert (tmp_path / "image.bin").read_bytes() == script.memory

    def test_source_lines_match_line_map(self):
        sources = mocktarget.boot_fixture_sources()
        for row in mocktarget.boot_fixture_line_map().splitlines():
            _, file, line = row.split("\t")
            text = sources[file].splitlines()
            assert len(text) >= int(line)


class TestStubServer:
    def test_initial_stop_state(self, boot_stub):
        link = link_to(boot_stub)
        assert link.exchange("?").payload == b"S05"
        link.close()

    def test_qsupported_reports_packet_size(self, boot_stub):
        link = link_to(boot_stub)
        assert link.exchange("qSupported").payload == b"PacketSize=1000"
        link.close()

    def test_memory_read_and_write(self, boot_stub):
        link = link_to(boot_stub)
        assert link.exchange("m7dfe,2").payload == b"55aa"
        assert link.exchange("M7100,1:cc").payload == b"OK"
        assert link.exchange("m7100,1").payload == b"cc"
        link.close()

    def test_memory_read_out_of_bounds(self, boot_stub):
        link = link_to(boot_stub)
        assert link.exchange("m100,4").payload == b"E01"
        assert link.exchange("m8fff,10").payload == b"E01"
        link.close()

    def test_step_walks_the_trace_then_exits(self, boot_stub):
        script = build_boot_fixture()
        link = link_to(boot_stub)
        for _ in script.trace[1:]:
            assert link.exchange("s").payload == b"S05"
        assert link.exchange("s").payload == b"W00"
        assert link.exchange("?").payload == b"W00"
        link.close()

    def test_registers_track_pc(self, boot_stub):
        script = build_boot_fixture()
        link = link_to(boot_stub)
        layout = script.layout

        def current_pc():
            from bootscope.registers import RegisterFile

            return RegisterFile.decode(layout, link.exchange("g").payload).pc

        assert current_pc() == script.trace[0]
        link.exchange("s")
        assert current_pc() == script.trace[1]
        link.close()

    def test_z0_continue_stops_at_breakpoint(self, boot_stub):
        link = link_to(boot_stub)
        loader = FIXTURE_MILESTONES["loader"]
        assert link.exchange(f"Z0,{loader:x},1").payload == b"OK"
        assert link.exchange("c").payload == b"S05"
        from bootscope.registers import RegisterFile

        regs = RegisterFile.decode(build_boot_fixture().layout, link.exchange("g").payload)
        assert regs.pc == loader
        link.close()

    def test_z0_unsupported_returns_empty(self, boot_stub_no_z0):
        link = link_to(boot_stub_no_z0)
        assert link.exchange("Z0,7e00,1").payload == b""
        link.close()

    def test_trap_patch_stops_continue(self, boot_stub_no_z0):
        link = link_to(boot_stub_no_z0)
        boot2 = FIXTURE_MILESTONES["boot2"]
        assert link.exchange(f"M{boot2:x},1:cc").payload == b"OK"
        assert link.exchange("c").payload == b"S05"
        from bootscope.registers import RegisterFile

        regs = RegisterFile.decode(build_boot_fixture().layout, link.exchange("g").payload)
        assert regs.pc == boot2
        link.close()

    def test_continue_matches_brute_force_definition(self, boot_stub):
        script = build_boot_fixture()
        link = link_to(boot_stub)
        breaks = {script.trace[3], script.trace[6]}
        for addr in sorted(breaks):
            assert link.exchange(f"Z0,{addr:x},1").payload == b"OK"

        pos = 0
        while True:
            expected = next((i for i in range(pos + 1, len(script.trace))
                             if script.trace[i] in breaks), None)
            reply = link.exchange("c").payload
            if expected is None:
                assert reply == b"W00"
                break
            assert reply == b"S05"
            from bootscope.registers import RegisterFile

            regs = RegisterFile.decode(script.layout, link.exchange("g").payload)
            assert regs.pc == script.trace[expected]
            pos = expected
        link.close()

    def test_unknown_command_returns_empty(self, boot_stub):
        link = link_to(boot_stub)
        assert link.exchange("vMustReplyEmpty").payload == b""
        link.close()

    def test_second_client_refused_while_active(self, boot_stub):
        link = link_to(boot_stub)
        link.exchange("?")
        second = socket.create_connection(("127.0.0.1", boot_stub.port), timeout=5)
        second.settimeout(5)
        # The refused socket is closed immediately: recv sees EOF.
        assert second.recv(1) == b""
        second.close()
        # First client still works.
        assert link.exchange("?").payload == b"S05"
        link.close()

    def test_deterministic_transcripts(self):
        commands = ["qSupported", "?", "g", "m7dfe,2", "Z0,7e00,1", "c", "g", "s", "c"]

        def run_once() -> bytes:
            server = mocktarget.serve(build_boot_fixture())
            received = bytearray()

            def tap(direction, data):
                if direction == "recv":
                    received.extend(data)

            try:
                link = link_to(server, on_wire=tap)
                for command in commands:
                    link.exchange(command)
                link.close()
            finally:
                server.stop()
            return bytes(received)

        assert run_once() == run_once()

    def test_corrupt_frame_gets_nack(self, boot_stub):
        sock = socket.create_connection(("127.0.0.1", boot_stub.port), timeout=5)
        sock.settimeout(5)
        sock.sendall(b"$?#00")  # wrong checksum
        assert sock.recv(1) == b"-"
        sock.sendall(b"$?#3f")  # '?' is 0x3f
        data = bytearray()
        while not data.endswith(b"#b8"):
            data += sock.recv(64)
        assert bytes(data) == b"+$S05#b8"
        sock.close()

    def test_nack_triggers_retransmission(self, boot_stub):
        sock = socket.create_connection(("127.0.0.1", boot_stub.port), timeout=5)
        sock.settimeout(5)
        sock.sendall(rsp.encode_packet(b"?"))

        def read_response():
            data = bytearray()
            while not data.endswith(b"#b8"):
                data += sock.recv(64)
            return bytes(data)

        first = read_response()
        sock.sendall(b"-")
        second = sock.recv(64)
        assert second == first.lstrip(b"+")
        sock.close()
