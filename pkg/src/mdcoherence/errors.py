"""Exception hierarchy. ``category`` is what the CLI prints on failure."""


class MdlError(Exception):
    exit_code = 1

    @property
    def category(self) -> str:
        return type(self).__name__


class InvalidSpec(MdlError, ValueError):
    exit_code = 5


class InvalidParameter(MdlError, ValueError):
    exit_code = 5


class ZeroPowerSignal(MdlError, ValueError):
    pass


class SignalTooShort(MdlError, ValueError):
    pass


class ShapeMismatch(MdlError, ValueError):
    pass


class NoForwardState(MdlError, RuntimeError):
    pass


class ArchMismatch(MdlError, ValueError):
    pass


class EmptyDataset(MdlError, ValueError):
    pass


class DivergedTraining(MdlError, RuntimeError):
    exit_code = 4


class DegenerateVariance(MdlError, ValueError):
    pass


class ConfigError(MdlError, ValueError):
    exit_code = 2

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


class IoError(MdlError, OSError):
    exit_code = 3


class TensorFormatError(MdlError, ValueError):
    exit_code = 3
