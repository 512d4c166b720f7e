"""Independent SPARQL 1.1 "INSERT DATA" validator, used as a test oracle.

Implements the relevant productions of the SPARQL 1.1 Update grammar
directly (InsertData, QuadData restricted to a TriplesTemplate of
IRI-subject statements, and the terminals IRIREF, STRING_LITERAL2, ECHAR,
LANGTAG). Anything outside that subset is rejected, which is exactly what
we want from an oracle for the updates this project generates.

No project serialization code is reused here: parsing works off the grammar's
terminal definitions only.
"""

from __future__ import annotations

import re

IRIREF_RE = re.compile(r'<([^\x00-\x20<>"{}|^`\\]*)>')
LANGTAG_RE = re.compile(r"@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*")
ECHAR_MAP = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f",
             '"': '"', "'": "'", "\\": "\\"}


class SparqlSyntaxError(ValueError):
    pass


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "#":  # comment to end of line
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self.pos += 1
            else:
                break

    def eof(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def expect_keyword(self, word: str):
        self.skip_ws()
        end = self.pos + len(word)
        if self.text[self.pos:end].upper() != word:
            raise SparqlSyntaxError(
                f"expected {word!r} at offset {self.pos}: {self.text[self.pos:self.pos+20]!r}"
            )
        self.pos = end

    def expect_char(self, ch: str):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise SparqlSyntaxError(f"expected {ch!r} at offset {self.pos}")
        self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def iriref(self) -> str:
        self.skip_ws()
        m = IRIREF_RE.match(self.text, self.pos)
        if not m:
            raise SparqlSyntaxError(f"expected IRIREF at offset {self.pos}")
        self.pos = m.end()
        return m.group(1)

    def string_literal2(self) -> str:
        # STRING_LITERAL2 ::= '"' ( [^"\\\n\r] | ECHAR )* '"'
        self.skip_ws()
        if self.peek() != '"':
            raise SparqlSyntaxError(f"expected string literal at offset {self.pos}")
        self.pos += 1
        out = []
        while True:
            if self.pos >= len(self.text):
                raise SparqlSyntaxError("unterminated string literal")
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch in "\n\r":
                raise SparqlSyntaxError("raw newline inside string literal")
            if ch == "\\":
                if self.pos + 1 >= len(self.text):
                    raise SparqlSyntaxError("dangling escape in string literal")
                esc = self.text[self.pos + 1]
                if esc not in ECHAR_MAP:
                    raise SparqlSyntaxError(f"invalid ECHAR: \\{esc}")
                out.append(ECHAR_MAP[esc])
                self.pos += 2
            else:
                out.append(ch)
                self.pos += 1


def parse_insert_data(update: str) -> set[tuple]:
    """Parse an INSERT DATA update; returns the triple set or raises.

    Triples come back as (subject, predicate, object) with objects either
    ("iri", value) or ("literal", value, datatype_or_None, lang_or_None),
    so callers can compare against another store's content.
    """
    sc = _Scanner(update)
    sc.expect_keyword("INSERT")
    sc.expect_keyword("DATA")
    sc.expect_char("{")
    triples: set[tuple] = set()
    while True:
        if sc.peek() == "}":
            sc.pos += 1
            break
        subject = sc.iriref()
        predicate = sc.iriref()
        if sc.peek() == "<":
            obj = ("iri", sc.iriref())
        else:
            value = sc.string_literal2()
            datatype = lang = None
            sc_pos_before = sc.pos
            if sc.text[sc.pos : sc.pos + 2] == "^^":
                sc.pos += 2
                datatype = sc.iriref()
            else:
                m = LANGTAG_RE.match(sc.text, sc.pos)
                if m:
                    lang = m.group(0)[1:]
                    sc.pos = m.end()
            del sc_pos_before
            obj = ("literal", value, datatype, lang)
        sc.expect_char(".")
        triples.add((subject, predicate, obj))
    if not sc.eof():
        raise SparqlSyntaxError(f"trailing content at offset {sc.pos}")
    return triples
