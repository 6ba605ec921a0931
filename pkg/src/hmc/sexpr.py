"""S-expression reader and printer.

Atoms are symbols (str) or integers; lists are Python lists. `;` starts a
line comment. Printing is canonical: single spaces, no line breaks, so
print(parse(print(x))) == print(x).
"""

from __future__ import annotations


class SexprError(Exception):
    def __init__(self, msg, line=None, col=None):
        if line is not None:
            msg = f"{line}:{col}: {msg}"
        super().__init__(msg)
        self.line = line
        self.col = col


_DELIMS = "();"


def tokenize(text):
    """Yield (token, line, col) where token is '(' , ')' or an atom string."""
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c.isspace():
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c, line, col
            col += 1
            i += 1
        else:
            start = i
            startcol = col
            while i < n and not text[i].isspace() and text[i] not in _DELIMS:
                i += 1
                col += 1
            yield text[start:i], line, startcol


def _atom(tok):
    try:
        return int(tok)
    except ValueError:
        return tok


def parse_many(text):
    """Parse all top-level forms in `text`."""
    forms = []
    stack = []
    for tok, line, col in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SexprError("unbalanced ')'", line, col)
            done = stack.pop()
            (stack[-1] if stack else forms).append(done)
        else:
            (stack[-1] if stack else forms).append(_atom(tok))
    if stack:
        raise SexprError("unclosed '('")
    return forms


def parse_one(text):
    forms = parse_many(text)
    if len(forms) != 1:
        raise SexprError(f"expected one form, got {len(forms)}")
    return forms[0]


def to_str(form):
    if isinstance(form, list):
        return "(" + " ".join(to_str(f) for f in form) + ")"
    return str(form)
