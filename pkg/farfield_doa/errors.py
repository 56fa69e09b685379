# errors.py

from pathlib import Path
from typing import List, Optional

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4


class FarfieldDoaError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1


class PreconditionError(FarfieldDoaError, ValueError):
    exit_code = EXIT_VALIDATION


class CoincidentPositionError(PreconditionError):
    def __init__(self, receiver_index: int):
        self.receiver_index = receiver_index
        super().__init__(f"coincident emitter/receiver (receiver {receiver_index + 1})")


class ScenarioValidationError(PreconditionError):
    def __init__(self, diagnostics: List):
        self.diagnostics = list(diagnostics)
        lines = [f"{d.field}: {d.message}" if d.field else d.message for d in self.diagnostics]
        super().__init__("Scenario validation failed:\n  " + "\n  ".join(lines))


class FileFormatError(FarfieldDoaError):
    exit_code = EXIT_IO

    def __init__(self, message: str, path: Optional[Path] = None,
                 line: Optional[int] = None, field: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field
        context = []
        if path is not None:
            context.append(str(path))
        if line is not None:
            context.append(f"line {line}")
        if field is not None:
            context.append(f"field '{field}'")
        prefix = ", ".join(context)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ScenarioFormatError(FileFormatError):
    pass


class CsvFormatError(FileFormatError):
    pass


class NumericalDegeneracyError(FarfieldDoaError):
    exit_code = EXIT_DEGENERATE


class UnobservableDirectionError(NumericalDegeneracyError):
    def __init__(self, rank: int, dim: int, null_space: np.ndarray):
        self.rank = rank
        self.dim = dim
        self.null_space = null_space
        super().__init__(
            f"unobservable direction component: system rank {rank} < dimension {dim}; "
            f"null space basis (columns):\n{np.array2string(null_space, precision=6)}"
        )


class DegenerateSolutionError(NumericalDegeneracyError):
    pass


class UnresolvableGeometryError(NumericalDegeneracyError):
    pass


class AoaUnobservableError(NumericalDegeneracyError):
    pass
