"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not match."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of the operation."""


class TensorFormatError(ValueError):
    """On-disk tensor file is malformed, truncated or non-finite."""


class DeadLayerError(RuntimeError):
    """A layer's output gradient is entirely zero; its input is unrecoverable."""


class PartialReconstructionError(DeadLayerError):
    """Inversion stopped at a dead layer part-way down the network.

    Carries the deepest layer whose input was still recovered so callers
    can keep the partial result for diagnostics.
    """

    def __init__(self, deepest_layer: int, partial_inputs):
        super().__init__(
            f"dead layer below layer {deepest_layer}; reconstruction is partial"
        )
        self.deepest_layer = deepest_layer
        self.partial_inputs = partial_inputs


class MixupExtractionError(ValueError):
    """Label does not carry a readable two-class mixture."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
