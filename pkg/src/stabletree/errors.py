"""Exception hierarchy shared by all stabletree modules."""


class StableTreeError(Exception):
    """Base class for all stabletree errors."""


class SchemaError(StableTreeError):
    """A schema is malformed, or data does not conform to its schema."""


class DataError(StableTreeError):
    """An input file could not be parsed or fails validation."""


class DegenerateSplitError(StableTreeError):
    """A split produces an empty child or falls outside its region."""


class DegenerateOracleError(StableTreeError):
    """Training data cannot support a non-constant oracle."""


class OracleIOError(StableTreeError):
    """An external oracle process crashed, timed out, or replied garbage."""


class SamplerStarvationError(StableTreeError):
    """Rejection sampling cannot hit the node region at a workable rate."""


class IncompatibleTreeError(StableTreeError):
    """A tree is being combined with data or an oracle from another schema."""


class BuildError(StableTreeError):
    """Tree construction failed; the message carries the node path."""


class InternalInvariantError(StableTreeError):
    """An internal consistency check failed; indicates a bug."""
