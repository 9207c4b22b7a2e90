from __future__ import annotations

import pytest

from bootscope import mocktarget, symbolics, transport
from bootscope.session import Session


@pytest.fixture
def boot_stub():
    server = mocktarget.serve(mocktarget.build_boot_fixture())
    yield server
    server.stop()


@pytest.fixture
def boot_stub_no_z0():
    server = mocktarget.serve(mocktarget.build_boot_fixture(z0_supported=False))
    yield server
    server.stop()


def link_to(server, timeout: float = 5.0, on_wire=None) -> transport.Link:
    cfg = transport.LinkConfig(port=server.port, response_timeout=timeout)
    return transport.connect(cfg, on_wire=on_wire)


def fixture_tables() -> tuple[symbolics.SymbolIndex, symbolics.LineMap]:
    return (
        symbolics.load_symbol_map(mocktarget.boot_fixture_symbol_map()),
        symbolics.load_line_map(mocktarget.boot_fixture_line_map()),
    )


def make_session(server, on_wire=None, attach: bool = True) -> Session:
    symbols, lines = fixture_tables()
    s = Session(link_to(server, on_wire=on_wire), symbols, lines)
    if attach:
        s.attach()
    return s


@pytest.fixture
def boot_link(boot_stub):
    link = link_to(boot_stub)
    yield link
    link.close()


@pytest.fixture
def boot_session(boot_stub):
    s = make_session(boot_stub)
    yield s
    s.close()


@pytest.fixture
def boot_session_no_z0(boot_stub_no_z0):
    s = make_session(boot_stub_no_z0)
    yield s
    s.close()
