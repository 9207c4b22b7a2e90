"""bootscope command line.

Subcommands cover every workflow: ``connect`` (interactive line-mode
debugger), ``trace-boot`` (milestone flow report), ``estimate`` (LOC timing),
``bench`` (scheduler statistics tables), ``mock`` (run the scripted stub)
and ``serve`` (HTTP API for the web UI).

Connection settings resolve as flags > environment (``BOOTSCOPE_HOST``,
``BOOTSCOPE_PORT``) > config file (``--config``, JSON) > defaults.  Exit
codes: 0 success, 1 usage error, 2 runtime failure; failures also print one
machine-readable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .. import __version__, boottrace, mocktarget, perfmodel, transport
from ..errors import BootscopeError
from ..registers import RegisterLayout
from ..session import Session, SessionPhase
from ..symbolics import LineMap, SymbolIndex, load_line_map, load_symbol_map
from . import api

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _setting(flag_value, env_name: str, config: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if env_name in os.environ:
        raw = os.environ[env_name]
        return type(default)(raw) if default is not None else raw
    if key in config:
        return config[key]
    return default


def _connection(args) -> transport.LinkConfig:
    config = _load_config(getattr(args, "config", None))
    return transport.LinkConfig(
        host=_setting(args.host, "BOOTSCOPE_HOST", config, "host", "127.0.0.1"),
        port=_setting(args.port, "BOOTSCOPE_PORT", config, "port", transport.DEFAULT_PORT),
        response_timeout=_setting(args.timeout, "BOOTSCOPE_TIMEOUT", config, "timeout", 5.0),
    )


def _tables(args) -> tuple[SymbolIndex, LineMap]:
    return api.load_tables(args.symmap, args.linemap, args.image)


def _layout(args) -> RegisterLayout | None:
    if getattr(args, "layout", None):
        return RegisterLayout.from_json(Path(args.layout).read_text())
    return None


def _write_out(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _add_connection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--host", help="stub host (default 127.0.0.1)")
    p.add_argument("--port", type=int, help="stub TCP port (default 1234)")
    p.add_argument("--timeout", type=float, help="response timeout in seconds (default 5)")
    p.add_argument("--config", help="JSON config file (flags and env override it)")


def _add_artifact_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image", help="ELF image to read symbols from")
    p.add_argument("--symmap", help="nm-style symbol map file")
    p.add_argument("--linemap", help="address<TAB>file<TAB>line map file")
    p.add_argument("--layout", help="register layout JSON (default: 32-bit x86)")


# -- connect (interactive) ------------------------------------------------------


_REPL_HELP = """\
commands:
  break <symbol | file:line | 0xaddr>   set a breakpoint
  delete <id>                           remove a breakpoint
  enable <id> | disable <id>            toggle a breakpoint
  info                                  list breakpoints
  step [n]                              single-step (n times)
  continue                              run to next breakpoint or exit
  regs                                  dump registers
  mem <addr> <len>                      hex-dump target memory
  where                                 show the current location
  help                                  this text
  quit                                  leave (restores patched bytes)
"""


def _print_stop(session: Session, event) -> None:
    if event.exited:
        code = event.reply.exit_code if event.reply.exit_code is not None else event.reply.signal_no
        print(f"target exited (status {code})")
    else:
        assert event.location is not None
        print(f"stopped at {event.location.describe()}")


def _repl_break(session: Session, what: str):
    if what.lower().startswith("0x"):
        return session.set_breakpoint(address=int(what, 16))
    if ":" in what:
        file, _, line = what.rpartition(":")
        return session.set_breakpoint(file=file, line=int(line))
    return session.set_breakpoint(symbol=what)


def _hexdump(addr: int, data: bytes) -> str:
    lines = []
    for off in range(0, len(data), 16):
        chunk = data[off : off + 16]
        lines.append(f"{addr + off:#010x}  {chunk.hex(' ')}")
    return "\n".join(lines)


def run_repl(session: Session, stdin=None) -> None:
    stdin = stdin or sys.stdin
    interactive = stdin.isatty()
    if session.phase is SessionPhase.STOPPED:
        print(f"stopped at {session.current_location().describe()}")
    while True:
        if interactive:
            print("(bootscope) ", end="", flush=True)
        raw = stdin.readline()
        if not raw:
            break
        parts = raw.strip().split()
        if not parts:
            continue
        command, *rest = parts
        try:
            if command in ("quit", "q", "exit"):
                break
            elif command == "help":
                print(_REPL_HELP, end="")
            elif command in ("break", "b"):
                print(_repl_break(session, rest[0]).describe())
            elif command == "delete":
                session.remove_breakpoint(int(rest[0]))
                print(f"deleted breakpoint {rest[0]}")
            elif command in ("enable", "disable"):
                bp = session.enable_breakpoint(int(rest[0]), enabled=command == "enable")
                print(f"{command}d {bp.describe()}")
            elif command == "info":
                if not session.breakpoints:
                    print("no breakpoints")
                for bp in session.breakpoints.values():
                    state = "" if bp.enabled else " (disabled)"
                    print(f"{bp.describe()}{state} hits={bp.hit_count}")
            elif command in ("step", "s"):
                for _ in range(int(rest[0]) if rest else 1):
                    event = session.step()
                    _print_stop(session, event)
                    if event.exited:
                        break
            elif command in ("continue", "c"):
                event = session.continue_run()
                if not event.exited and event.pc is not None:
                    bp = session.breakpoint_at(event.pc)
                    if bp is not None:
                        print(f"hit breakpoint {bp.id} (hits={bp.hit_count})")
                _print_stop(session, event)
            elif command == "regs":
                regs = session.read_registers()
                names = regs.layout.names
                for row in range(0, len(names), 4):
                    print("  ".join(f"{n}={regs.values[n]:#010x}" for n in names[row : row + 4]))
            elif command == "mem":
                addr = int(rest[0], 0)
                print(_hexdump(addr, session.read_memory(addr, int(rest[1], 0))))
            elif command == "where":
                print(session.current_location().describe())
            else:
                print(f"unknown command {command!r} (try: help)")
        except (IndexError, ValueError) as exc:
            print(f"bad arguments: {exc} (try: help)")
        except BootscopeError as exc:
            print(f"error: {exc}")
        if session.phase is SessionPhase.EXITED:
            pass  # inspection is over, but let the user read state and quit


def cmd_connect(args) -> int:
    symbols, lines = _tables(args)
    link = transport.connect(_connection(args))
    session = Session(link, symbols, lines, layout=_layout(args))
    session.attach()
    try:
        run_repl(session)
    finally:
        session.close()
    return EXIT_OK


# -- trace-boot -------------------------------------------------------------------


def _catalog_from_spec(spec: str) -> boottrace.MilestoneCatalog:
    if spec.startswith("builtin:"):
        return boottrace.builtin_catalog(spec.split(":", 1)[1])
    return boottrace.load_catalog(Path(spec).read_text())


def cmd_trace_boot(args) -> int:
    catalog = _catalog_from_spec(args.catalog)
    stub = None
    try:
        if args.fixture:
            stub = mocktarget.serve(mocktarget.build_boot_fixture(z0_supported=not args.no_z0))
            session = api.open_session(
                "127.0.0.1", stub.port,
                load_symbol_map(mocktarget.boot_fixture_symbol_map()),
                load_line_map(mocktarget.boot_fixture_line_map()),
            )
        else:
            symbols, lines = _tables(args)
            link = transport.connect(_connection(args))
            session = Session(link, symbols, lines, layout=_layout(args))
            session.attach()
        try:
            trace = boottrace.trace_boot(session, catalog, budget=args.budget)
        finally:
            session.close()
    finally:
        if stub is not None:
            stub.stop()

    _write_out(args.out, boottrace.render_flow(trace, catalog, fmt="text"))
    if args.dot:
        _write_out(args.dot, boottrace.render_flow(trace, catalog, fmt="dot"))
    if trace.outcome is not boottrace.TraceOutcome.COMPLETED:
        log.warning("trace outcome: %s", trace.outcome.value)
    return EXIT_OK


# -- estimate ----------------------------------------------------------------------


def cmd_estimate(args) -> int:
    source = Path(args.source).read_text()
    t_instr = perfmodel.parse_duration_ns(args.t_instr)
    counts = {}
    for spec in args.func:
        try:
            name, start, end = spec.rsplit(":", 2)
            span = (int(start), int(end))
        except ValueError:
            raise _UsageError(f"--func wants name:start:end, got {spec!r}") from None
        counts[name] = perfmodel.count_loc(source, *span)
    model = perfmodel.LocModel(loc_counts=counts, t_instr_ns=t_instr)
    for name in counts:
        total = perfmodel.estimate_time(model, name)
        print(f"{name}: {counts[name]} LOC * {t_instr:g} ns = {total:g} ns")
    return EXIT_OK


# -- bench -------------------------------------------------------------------------


def cmd_bench(args) -> int:
    summaries: list[perfmodel.BenchSummary] = []
    if args.samples:
        samples = perfmodel.read_samples_csv(Path(args.samples).read_text())
        summaries.extend(perfmodel.summarize_all(samples, population=args.population))
    if args.summaries:
        summaries.extend(perfmodel.read_summaries_csv(Path(args.summaries).read_text()))
    if not summaries:
        raise _UsageError("provide --samples and/or --summaries")
    _write_out(args.out, perfmodel.render_bench_tables(summaries, fmt=args.format))
    return EXIT_OK


# -- mock --------------------------------------------------------------------------


def cmd_mock(args) -> int:
    if args.fixture:
        script = mocktarget.build_boot_fixture(z0_supported=not args.no_z0)
    elif args.script:
        script = mocktarget.TargetScript.load(args.script)
    else:
        raise _UsageError("provide --script or --fixture")

    if args.export:
        path = script.save(args.export)
        export_dir = Path(args.export)
        (export_dir / "symbols.map").write_text(mocktarget.boot_fixture_symbol_map())
        (export_dir / "lines.map").write_text(mocktarget.boot_fixture_line_map())
        print(f"wrote {path} (+ image.bin, symbols.map, lines.map)")
        if args.port is None:
            return EXIT_OK

    port = args.port if args.port is not None else transport.DEFAULT_PORT
    server = mocktarget.serve(script, port=port)
    print(f"mock stub listening on 127.0.0.1:{server.port}", flush=True)
    try:
        while True:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


# -- serve -------------------------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    manager = api.SessionManager()
    if args.demo:
        runtime = api.build_demo(manager, z0_supported=not args.no_z0)
        print(f"demo session {runtime.id} attached "
              f"(stub on 127.0.0.1:{runtime.owned_stub.port})", flush=True)
    app = api.create_app(manager, ui_dir=args.ui_dir)
    try:
        uvicorn.run(app, host=args.host or "127.0.0.1", port=args.port, log_level="warning")
    finally:
        manager.close_all()
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="bootscope",
                     description="kernel boot debugging over the GDB remote serial protocol")
    parser.add_argument("--version", action="version", version=f"bootscope {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("connect", help="interactive line-mode debugger")
    _add_connection_flags(p)
    _add_artifact_flags(p)
    p.set_defaults(handler=cmd_connect)

    p = sub.add_parser("trace-boot", help="record the boot milestone flow")
    _add_connection_flags(p)
    _add_artifact_flags(p)
    p.add_argument("--catalog", default="builtin:freebsd8-i386",
                   help="catalog file, or builtin:freebsd8-i386 / builtin:linux-x86")
    p.add_argument("--out", default="-", help="report path ('-' for stdout)")
    p.add_argument("--dot", help="also write a dot graph here")
    p.add_argument("--budget", type=int, default=boottrace.DEFAULT_BUDGET,
                   help="max run-control operations")
    p.add_argument("--fixture", action="store_true",
                   help="self-host the built-in mock boot target")
    p.add_argument("--no-z0", action="store_true",
                   help="with --fixture: stub without Z0 so traps get patched")
    p.set_defaults(handler=cmd_trace_boot)

    p = sub.add_parser("estimate", help="LOC-based execution time estimate")
    p.add_argument("--source", required=True, help="source file to count")
    p.add_argument("--func", action="append", required=True,
                   metavar="NAME:START:END", help="function span (1-based, inclusive)")
    p.add_argument("--t-instr", default="10ns", dest="t_instr",
                   help="time per executable line (default 10ns)")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("bench", help="scheduler benchmark tables")
    p.add_argument("--samples", help="CSV: scheduler,metric,concurrency,value_seconds")
    p.add_argument("--summaries", help="CSV: scheduler,metric,concurrency,mean,stddev[,n]")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", default="text", choices=("text", "markdown"))
    p.add_argument("--population", action="store_true",
                   help="population (n) instead of sample (n-1) stddev")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("mock", help="run the scripted gdbstub")
    p.add_argument("--script", help="script.json produced by TargetScript.save")
    p.add_argument("--fixture", action="store_true", help="serve the built-in boot fixture")
    p.add_argument("--no-z0", action="store_true", help="with --fixture: disable Z0 support")
    p.add_argument("--port", type=int, default=None,
                   help="listen port (default 1234; 0 for ephemeral; with --export, omit to just write files)")
    p.add_argument("--export", help="write script.json/image.bin/maps to this directory")
    p.set_defaults(handler=cmd_mock)

    p = sub.add_parser("serve", help="HTTP API (+ optional web UI) for sessions")
    p.add_argument("--host", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=8177)
    p.add_argument("--demo", action="store_true",
                   help="spin up the mock boot fixture and attach a session")
    p.add_argument("--no-z0", action="store_true", help="demo stub without Z0 support")
    p.add_argument("--ui-dir", help="serve this directory as the web UI")
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"bootscope: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except _UsageError as exc:
        print(f"bootscope: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_FAILURE
    except (BootscopeError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
