#!/usr/bin/env python3
"""Regenerate opcode_tables.inc from xdis (pip install xdis).

The running interpreter's own `dis` tables are checked against the xdis
table for the same version before anything is written.
"""
import dis
import importlib
import os
import sys

VERSIONS = [(3, 5), (3, 6), (3, 7), (3, 8), (3, 9), (3, 10), (3, 11)]

CATEGORIES = [
    ("hasconst", 1 << 0),
    ("hasname", 1 << 1),
    ("haslocal", 1 << 2),
    ("hasfree", 1 << 3),
    ("hascompare", 1 << 4),
    ("hasjrel", 1 << 5),
    ("hasjabs", 1 << 6),
]


def load(major, minor):
    return importlib.import_module("xdis.opcodes.opcode_3x.opcode_%d%d" % (major, minor))


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    out = []
    out.append("// Generated by gen_opcode_tables.py from xdis; do not edit.\n")
    for major, minor in VERSIONS:
        m = load(major, minor)
        if (major, minor) == sys.version_info[:2]:
            for op, name in enumerate(dis.opname):
                if not name.startswith("<"):
                    assert m.opname[op] == name, (op, name, m.opname[op])
            assert sorted(m.hasconst) == sorted(dis.hasconst)
            assert sorted(m.hasname) == sorted(dis.hasname)
        names = []
        flags = []
        for op in range(256):
            n = m.opname[op]
            if n.startswith("<") or n.startswith("UNKNOWN"):
                n = ""
            names.append(n)
            f = 0
            for attr, bit in CATEGORIES:
                if op in getattr(m, attr, []):
                    f |= bit
            flags.append(f)
        tag = "%d%d" % (major, minor)
        out.append("inline constexpr opcode_table table_%s = {\n" % tag)
        out.append("    {%d, %d},\n" % (major, minor))
        out.append("    %d, // HAVE_ARGUMENT\n" % m.HAVE_ARGUMENT)
        out.append("    %d, // EXTENDED_ARG\n" % m.opmap["EXTENDED_ARG"])
        out.append("    {{\n")
        for op in range(256):
            out.append('        {"%s", 0x%02x},\n' % (names[op], flags[op]))
        out.append("    }},\n};\n\n")
    with open(os.path.join(here, "opcode_tables.inc"), "w") as f:
        f.write("".join(out))


if __name__ == "__main__":
    main()
