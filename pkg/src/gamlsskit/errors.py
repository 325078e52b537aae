"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the support or parameter space."""

    def __init__(self, argument, message):
        self.argument = argument
        super().__init__(f"{argument}: {message}")


class DegenerateInputError(ValueError):
    """Input too small or too degenerate to define the requested fit."""


class FittingError(RuntimeError):
    """Non-finite quantity encountered while fitting."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class DivergenceError(FittingError):
    """Global deviance became non-finite; carries the deviance trace."""

    def __init__(self, message, trace=()):
        self.trace = tuple(trace)
        super().__init__(f"{message}; deviance trace: {list(self.trace)}")


class ConvergenceError(RuntimeError):
    """Iterative routine hit its iteration cap."""


class RankError(ValueError):
    """Design or information matrix is singular."""

    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        if self.columns:
            message = f"{message}: {', '.join(self.columns)}"
        super().__init__(message)


class LeverageError(ValueError):
    """An observation has leverage numerically equal to one."""


class InsufficientDataError(ValueError):
    """Too few observations for the statistic."""


class NestingError(ValueError):
    """Models passed to a likelihood-ratio test are not nested."""


class SchemaError(ValueError):
    """Dataset does not conform to the declared schema."""

    def __init__(self, message, problems=()):
        self.problems = list(problems)
        if self.problems:
            shown = "; ".join(self.problems[:10])
            more = len(self.problems) - 10
            if more > 0:
                shown += f"; ... {more} more"
            message = f"{message}: {shown}"
        super().__init__(message)


class FormulaError(ValueError):
    """Malformed model formula, with a 1-based column position."""

    def __init__(self, message, text="", column=None):
        self.column = column
        self.text = text
        self.reason = message
        full = message
        if column is not None:
            full = f"{message} at column {column}\n  {text}\n  {' ' * (column - 1)}^"
        super().__init__(full)
