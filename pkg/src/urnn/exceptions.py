from typing import Optional


class ShapeMismatchError(ValueError):

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        shown = " vs ".join(str(tuple(shape)) for shape in shapes)
        super().__init__(f"{op}: shape mismatch {shown}")


class MissingGradientError(ValueError):
    pass


class SceneFormatError(ValueError):

    def __init__(self, message: str, line_number: Optional[int] = None,
                 path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        where = ""
        if path:
            where += f"{path}"
        if line_number is not None:
            where += f":{line_number}" if where else f"line {line_number}"
        super().__init__(f"{where}: {message}" if where else message)


class SceneCompletenessError(ValueError):
    pass


class ModelIntegrityError(ValueError):
    pass


class ModelVersionError(ModelIntegrityError):
    pass


class NumericalError(ArithmeticError):
    pass


class GenerationError(RuntimeError):
    pass


class UsageError(ValueError):
    pass
