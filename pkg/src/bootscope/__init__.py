"""bootscope: debug a kernel boot over the GDB remote serial protocol.

Client-side toolkit for talking to an emulator gdbstub on a loopback TCP
port: packet codec, link management, symbol/line resolution, a run-control
session engine, a boot milestone tracer, and LOC/benchmark performance
reports.  A scripted mock stub makes every workflow testable without an
emulator.
"""

__version__ = "0.1.0"
