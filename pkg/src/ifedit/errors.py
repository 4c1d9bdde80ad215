"""Exception types shared across the package.

The CLI maps these onto exit codes: config problems exit 2, remote backend
failures exit 3, file I/O failures exit 4.
"""


class IFEditError(Exception):
    """Base class for all package-specific failures."""


class ShapeError(IFEditError, ValueError):
    """Tensor dimensions violate an operation's contract."""


class ConfigError(IFEditError, ValueError):
    """Invalid configuration or argument combination."""


class TransportError(IFEditError):
    """Remote endpoint unreachable after the configured retries."""


class ProtocolError(IFEditError):
    """Remote endpoint answered with a malformed payload."""


class ContractError(IFEditError):
    """Remote endpoint answered with tensors of an unexpected shape."""


class PipelineError(IFEditError):
    """Failure inside a pipeline phase; carries the phase name."""

    def __init__(self, phase: str, message: str):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase
