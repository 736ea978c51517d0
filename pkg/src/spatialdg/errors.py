"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and an ``exit_code``
that the command line front end maps onto the process status.
"""

from __future__ import annotations


class SpatialDGError(Exception):
    code = "error"
    exit_code = 2

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return self.message or self.code


class ConfigError(SpatialDGError):
    code = "config_error"


# geometry
class DuplicateLocation(SpatialDGError):
    code = "duplicate_location"


class BadK(SpatialDGError):
    code = "bad_k"


class NonFiniteCoordinate(SpatialDGError):
    code = "non_finite_coordinate"


class ZeroVector(SpatialDGError):
    code = "zero_vector"


class MissingEdge(SpatialDGError):
    code = "missing_edge"


# autodiff / numerics
class ShapeMismatch(SpatialDGError):
    code = "shape_mismatch"


class NonFiniteResult(SpatialDGError):
    code = "non_finite_result"
    exit_code = 3


class DisconnectedLoss(SpatialDGError):
    code = "disconnected_loss"
    exit_code = 3


class NonFiniteLoss(SpatialDGError):
    code = "non_finite_loss"
    exit_code = 3


# losses / metrics
class LengthMismatch(SpatialDGError):
    code = "length_mismatch"


class DegenerateLabels(SpatialDGError):
    code = "degenerate_labels"
    exit_code = 3


# training
class EmptyDomain(SpatialDGError):
    code = "empty_domain"


class TooFewLocations(SpatialDGError):
    code = "too_few_locations"


class BadFraction(SpatialDGError):
    code = "bad_fraction"


# data
class MissingColumn(SpatialDGError):
    code = "missing_column"


class UnparsableNumber(SpatialDGError):
    code = "unparsable_number"

    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptyFile(SpatialDGError):
    code = "empty_file"
    exit_code = 4


class NonBinaryLabel(SpatialDGError):
    code = "non_binary_label"


class BadCount(SpatialDGError):
    code = "bad_count"


class CheckpointError(SpatialDGError):
    code = "checkpoint_error"
