"""Exception types raised across the package."""


class DechistError(Exception):
    """Base class for all package errors."""


class NotHermitian(DechistError, ValueError):
    pass


class NoConvergence(DechistError, RuntimeError):
    pass


class ExpmOverflow(DechistError, OverflowError):
    pass


class TooFewSamples(DechistError, ValueError):
    pass


class InvalidModel(DechistError, ValueError):
    pass


class InvalidDensityMatrix(DechistError, ValueError):
    pass


class NoTrap(DechistError, ValueError):
    """Raised when an operation needs a trap/sink but the model has none."""


class BudgetExceeded(DechistError, RuntimeError):
    """Raised when a decoherence matrix would exceed the configured entry cap."""


class IndexOutOfRange(DechistError, IndexError):
    pass


class NotPSD(DechistError, ValueError):
    pass


class GridTooCoarse(DechistError, ValueError):
    pass


class ConfigInvalid(DechistError, ValueError):
    """Configuration failed schema or semantic validation.

    ``problems`` holds ``(path, message)`` pairs, ``path`` being a dotted
    field path such as ``model.hamiltonian_cm1[1][2]``.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{p}: {m}" if p else m for p, m in self.problems)
        super().__init__(text or "invalid configuration")
