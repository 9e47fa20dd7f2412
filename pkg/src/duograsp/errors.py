"""Exception types shared across the package."""


class DuograspError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedFormatError(DuograspError):
    """Mesh file extension or encoding is not OBJ / STL."""


class EmptyMeshError(DuograspError):
    """Mesh has no valid faces after filtering."""


class DegenerateMeshError(DuograspError):
    """Mesh extent too small to operate on (max extent < 1e-9 m)."""


class DegenerateContactsError(DuograspError):
    """Contact points coincide; no grasp frame can be built."""


class BadWeightsError(DuograspError):
    """Score weights are negative or do not sum to 1."""


class BadThresholdsError(DuograspError):
    """Classification thresholds violate 0 < t1 < t2 <= 1."""


class NonUnitNormalError(DuograspError):
    """Support-plane normal is not unit length."""


class EmptyDatasetError(DuograspError):
    """Operation requires at least one object / pair."""


class SchemaVersionMismatchError(DuograspError):
    """Serialized file carries an unknown schema version."""


class ValidationError(DuograspError):
    """A serialized record or in-memory object violates an invariant."""


class ConfigError(DuograspError):
    """Pipeline configuration is missing or invalid; message names the field."""
