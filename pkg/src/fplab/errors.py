"""Exception types shared across the simulator."""


class FplabError(Exception):
    """Base class for all fplab errors."""


class InvalidConfigError(FplabError, ValueError):
    """A configuration value violates its contract."""


class ShapeMismatchError(FplabError, ValueError):
    """Parameter vectors or tensors with incompatible dimensions."""


class EmptyShardError(FplabError, ValueError):
    """Local training was asked to run on an empty shard."""


class EmptyAggregationError(FplabError, ValueError):
    """Aggregation received no client updates."""


class InvalidBatchError(FplabError, ValueError):
    """A loss function received an empty or malformed batch."""


class InvalidDatasetError(FplabError, ValueError):
    """A dataset does not satisfy an operation's preconditions."""


class InvalidInputError(FplabError, ValueError):
    """A metric was evaluated on inadmissible inputs."""


class DivergenceError(FplabError, ArithmeticError):
    """Training produced a non-finite loss.

    Carries the round or iteration at which the blow-up happened.
    """

    def __init__(self, message, *, round=None, iteration=None):
        suffix = []
        if round is not None:
            suffix.append(f"round={round}")
        if iteration is not None:
            suffix.append(f"iteration={iteration}")
        if suffix:
            message = f"{message} ({', '.join(suffix)})"
        super().__init__(message)
        self.round = round
        self.iteration = iteration
