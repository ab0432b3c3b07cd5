"""Error types shared across the toolkit.

Every domain failure carries a stable ``code`` string so the CLI and the
HTTP service can report errors uniformly.
"""


class DomainError(Exception):
    """Base class for expected, reportable failures."""

    code = "domain-error"

    def __init__(self, detail: str = "", code: str | None = None):
        if code is not None:
            self.code = code
        self.detail = detail
        super().__init__(f"{self.code}: {detail}" if detail else self.code)


class ValidationError(DomainError):
    """A value violates a declared invariant; ``field`` names the offender."""

    code = "validation-error"

    def __init__(self, code: str, field: str, detail: str):
        self.field = field
        super().__init__(f"{field}: {detail}", code=code)
