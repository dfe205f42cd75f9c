"""Exception types shared across the package."""


class PrunelabError(Exception):
    """Base class for all errors raised by prunelab."""


class ConfigurationError(PrunelabError, ValueError):
    """A network, plan or experiment configuration is invalid."""


class InputError(PrunelabError, ValueError):
    """An argument violates an operation's precondition."""


class StateError(PrunelabError, RuntimeError):
    """An operation was called on an object in the wrong state."""


class FormatError(PrunelabError, ValueError):
    """A serialized payload (checkpoint, IDX file, record) is malformed."""
