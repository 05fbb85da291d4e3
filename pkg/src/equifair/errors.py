"""Exception hierarchy shared by the library and the command line."""


class EquifairError(Exception):
    """Base class for every error raised by equifair."""


class ValidationError(EquifairError, ValueError):
    """Malformed input: wrong shapes, non-finite values, bad parameters."""


class DegenerateInputError(ValidationError):
    """Input is well formed but the fairness problem is vacuous.

    Raised for empty inputs and for sensitive columns carrying a single
    modality.
    """


class UnknownModalityError(ValidationError):
    """A modality met at transform time was never seen during fit."""

    def __init__(self, attribute, value, row):
        self.attribute = attribute
        self.value = value
        self.row = row
        super().__init__(
            f"unknown modality {value!r} for attribute {attribute!r} at row {row}"
        )


class NotFittedError(EquifairError, RuntimeError):
    """A calibrator was used before ``fit``."""


class SchemaError(ValidationError):
    """A serialized document does not follow the expected schema."""
