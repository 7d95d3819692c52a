#!/usr/bin/env python3
"""Regenerate src/glyphtext/data/arabic_joining.txt from the Unicode database.

Uses the `regex` package's Joining_Type property (real UCD data) to emit a
semicolon-delimited file in the ArabicShaping.txt layout:

    XXXX; NAME; JOINING_TYPE; JOINING_GROUP

Only the codepoint and joining-type columns are consumed by the shaping
engine; the joining-group column is not populated here. Codepoints whose
joining type is the default Non_Joining are omitted, matching the published
file's convention.
"""

import sys
import unicodedata
from pathlib import Path

import regex

OUT = Path(__file__).resolve().parent.parent / "src" / "glyphtext" / "data" / "arabic_joining.txt"

TYPES = [
    ("Dual_Joining", "D"),
    ("Right_Joining", "R"),
    ("Left_Joining", "L"),
    ("Join_Causing", "C"),
    ("Transparent", "T"),
]


def main() -> None:
    all_chars = "".join(
        chr(cp) for cp in range(sys.maxunicode + 1) if not 0xD800 <= cp <= 0xDFFF
    )
    entries = {}
    for prop, letter in TYPES:
        pat = regex.compile(r"\p{Joining_Type=%s}" % prop)
        for ch in pat.findall(all_chars):
            entries[ord(ch)] = letter

    lines = [
        "# Arabic cursive joining classes, derived from the Unicode Character",
        "# Database Joining_Type property (via the `regex` package, UCD %s)." % regex.__version__,
        "# Layout follows ArabicShaping.txt: codepoint; name; type; group.",
        "# The joining-group column is not populated. Regenerate with",
        "# tools/make_joining_data.py.",
        "",
    ]
    for cp in sorted(entries):
        name = unicodedata.name(chr(cp), "<unnamed-%04X>" % cp)
        lines.append("%04X; %s; %s; No_Joining_Group" % (cp, name, entries[cp]))
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    counts = {}
    for v in entries.values():
        counts[v] = counts.get(v, 0) + 1
    print("wrote %s (%d entries: %s)" % (OUT, len(entries), counts))


if __name__ == "__main__":
    main()
