"""Error types shared across the package."""


class DeltalogError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DeltalogError):
    """Rule text that does not conform to the grammar."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})" if line else message)


class SafetyError(ParseError):
    """A head variable that does not occur in any body atom."""

    def __init__(self, rule_text: str, variable: str, line: int = 0):
        self.rule_text = rule_text
        self.variable = variable
        super().__init__(
            f"unsafe rule {rule_text!r}: head variable {variable!r} not bound in body", line
        )


class ArityError(ParseError):
    """A predicate used with an arity different from its first occurrence."""

    def __init__(self, predicate: str, expected: int, got: int, line: int = 0):
        self.predicate = predicate
        super().__init__(
            f"predicate {predicate!r} used with arity {got}, previously {expected}", line
        )


class DataError(DeltalogError):
    """Malformed fact data, reported with its source line number."""

    def __init__(self, message: str, line: int = 0, source: str = ""):
        self.line = line
        self.source = source
        where = f"{source or 'data'}:{line}" if line else (source or "data")
        super().__init__(f"{where}: {message}")


class UnknownIdError(DeltalogError, LookupError):
    """Dictionary lookup of an id that was never issued."""


class UnknownPredicateError(DeltalogError):
    """Reference to a predicate the program or store does not know."""
