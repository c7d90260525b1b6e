"""Exception hierarchy shared by every stage of the pipeline."""


class ImbfError(Exception):
    """Base class for all package errors."""


class InputError(ImbfError):
    """Bad input data or configuration (CLI exit code 2)."""


class SchemaError(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class LabelError(InputError):
    pass


class EmptyDatasetError(InputError):
    pass


class MissingValuesError(InputError):
    pass


class ConfigError(InputError):
    pass


class TrainingError(ImbfError):
    """Failure while resampling or fitting (CLI exit code 3)."""


class InsufficientMinorityError(TrainingError):
    pass


class DegenerateLabelsError(TrainingError):
    pass


class NeighborCountError(TrainingError):
    pass


class SmoteUnderflowError(TrainingError):
    pass


class ClusterCountError(TrainingError):
    pass


class DivergenceError(TrainingError):
    pass


class ShapeError(TrainingError):
    pass


class UndefinedAucError(TrainingError):
    pass


class LeakageError(TrainingError):
    pass
