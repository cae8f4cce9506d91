from typing import Optional


class SweepDemodError(Exception):
    """
    Root of every error raised by the package.

    The message is prefixed with the module that raised it so that the CLI
    can print it verbatim.

    :param origin: Short module name, e.g. ``core.persistence``.
    :type origin: str
    :param message: Human readable description.
    :type message: str
    """

    def __init__(self, origin: str, message: str) -> None:
        self.origin: str = origin
        self.message: str = message
        super().__init__(f"{origin}: {message}")


class PersistenceError(SweepDemodError):
    def __init__(self, origin: str, message: str, path: str) -> None:
        self.path: str = path
        super().__init__(origin, f"{message} [{path}]")


class FormatError(SweepDemodError):
    def __init__(
        self,
        origin: str,
        message: str,
        field: str,
        path: Optional[str] = None,
    ) -> None:
        self.field: str = field
        self.path: Optional[str] = path
        where: str = f" [{path}]" if path is not None else ""
        super().__init__(origin, f"{field}: {message}{where}")


class ConfigError(SweepDemodError):
    def __init__(
        self,
        origin: str,
        message: str,
        key: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        self.key: Optional[str] = key
        self.line: Optional[int] = line

        prefix: str = ""
        if line is not None:
            prefix = f"line {line}: "
        if key is not None:
            prefix = f"{prefix}{key}: "

        super().__init__(origin, f"{prefix}{message}")


class ValidationError(SweepDemodError):
    """
    Invariant violation detected while constructing a value object.

    :param field: Name of the offending field, as it appears in config
        files (snake_case) so parsers can map it back to a line.
    :type field: str
    """

    def __init__(self, origin: str, message: str, field: str) -> None:
        self.field: str = field
        super().__init__(origin, f"{field}: {message}")
        self.message = message


class DomainError(ValidationError):
    pass


class ContractError(SweepDemodError):
    pass


class DivergenceError(SweepDemodError):
    def __init__(self, origin: str, message: str, iteration: int) -> None:
        self.iteration: int = iteration
        super().__init__(origin, f"iteration {iteration}: {message}")
