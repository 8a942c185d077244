"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class ValidationError(ValueError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class DomainError(ValidationError):
    """A parameter lies outside its admissible range."""


class EmptySettingError(ValidationError):
    def __init__(self, setting, what="setting"):
        self.setting = setting
        super().__init__(f"empty {what} {setting}: total count is zero")


class SchemaError(KeyError):
    """A moment word is not present in the variable table."""


class SolverError(RuntimeError):
    """The SDP solver failed to produce a usable answer (CLI exit code 3)."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class CertificateError(SolverError):
    """The dual iterate could not be repaired into a valid certificate."""
