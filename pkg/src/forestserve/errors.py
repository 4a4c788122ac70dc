"""Exception types shared across the package."""


class ForestError(Exception):
    """Base class for all forestserve errors."""


class MalformedDocument(ForestError):
    """Model document is not syntactically valid JSON."""


class SchemaViolation(ForestError):
    """Model document is valid JSON but does not conform to the interchange schema."""


class InvariantViolation(ForestError):
    """A structural invariant of the forest IR does not hold."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class DimensionMismatch(ForestError):
    """Sample or block width does not match the model's feature count."""


class TooManyLeaves(ForestError):
    """A tree exceeds the 64-leaf limit of the bit-vector engine."""

    def __init__(self, tree_index, n_leaves):
        self.tree_index = tree_index
        self.n_leaves = n_leaves
        super().__init__(
            f"tree {tree_index} has {n_leaves} leaves; the bit-vector engine "
            f"packs one 64-bit word per tree"
        )


class MissingValueUnsupported(ForestError):
    """Engine received a sample with missing entries it cannot route."""


class ParseError(ForestError):
    """Decision-program text does not conform to the grammar."""


class UnsupportedEngineForPlan(ForestError):
    """Requested engine cannot run under the requested plan kind."""


class MissingPartial(ForestError):
    """A (block, partition) partial result is absent at aggregation time."""

    def __init__(self, block_id, partition_id):
        self.block_id = block_id
        self.partition_id = partition_id
        super().__init__(f"no partial result for block {block_id}, partition {partition_id}")


class StoreCorrupt(ForestError):
    """Native store or partition store failed a magic/checksum/hash check."""


class RowWidthMismatch(ForestError):
    """CSV row has the wrong number of fields."""


class NonNumericField(ForestError):
    """CSV field is neither numeric, empty, nor the missing token."""


class IndexOutOfRange(ForestError):
    """Sparse column index outside [1, num_features]."""


class NonMonotonicIndices(ForestError):
    """Sparse column indices are not strictly increasing within a row."""


class IoFailure(ForestError):
    """Underlying file write failed."""


class ConfigError(ForestError):
    """Benchmark configuration is invalid."""
