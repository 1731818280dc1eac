"""Exception hierarchy shared by all modules."""


class UCPLabError(Exception):
    """Base class for every error raised by ucp_lab."""


class InvalidParams(UCPLabError, ValueError):
    pass


class UnboundedDomain(UCPLabError):
    pass


class EmptyInterior(UCPLabError):
    pass


class EllipticityViolation(UCPLabError):
    def __init__(self, message, cell=None, min_eig=None):
        super().__init__(message)
        self.cell = cell
        self.min_eig = min_eig


class NotConverged(UCPLabError):
    """Raised only when a caller demands convergence; solvers normally flag it."""


class GapUnresolved(UCPLabError):
    pass


class DegenerateLog(UCPLabError):
    pass


class UnsupportedReflection(UCPLabError):
    pass


class DensenessNotCertified(UCPLabError):
    pass


class ConfigError(UCPLabError):
    def __init__(self, message, field=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line
