"""gradleak: soft-label and feature recovery from dense-layer gradients.

A library plus CLI for studying how much a single training example leaks
through the gradients of a classifier's final fully-connected layer:
augmented soft labels (label smoothing, mixup) and the layer's input are
recovered from a one-dimensional scalar search, and inputs of unbiased
fully-connected networks are then reconstructed analytically layer by
layer. A noise-perturbation harness measures how additive differential
privacy style noise degrades the attack.
"""

from .errors import (
    ConfigError,
    DeadLayerError,
    DomainError,
    MixupExtractionError,
    PartialReconstructionError,
    ShapeError,
    TensorFormatError,
)
from .metrics import is_correct, l_r, l_s, psnr, ssim
from .reconstruct import (
    ReconstructionResult,
    bias_attack_feature,
    invert_layer,
    propagate_zgrad,
    reconstruct_input,
    write_pgm,
    write_ppm,
)
from .recovery import (
    IdlgResult,
    PseudoLabelContext,
    RecoveryConfig,
    RecoveryResult,
    Status,
    build_context,
    extract_mixup,
    idlg_baseline,
    label_loss,
    loss_derivative,
    pseudo_label,
    pseudo_label_batch,
    recover,
    scan_losses,
    search_gradient,
    search_pso,
)
from .robustness import NoiseSpec, SweepReport, noise_sweep, perturb
from .tensor import RngHandle, as_tensor, matvec, read_tensor, softmax, write_tensor
from .victim import (
    AttackInstance,
    AugmentedLabel,
    GradientCapture,
    LayerSpec,
    MlpModel,
    backward,
    cross_entropy,
    forward,
    init_mlp,
    make_instance,
    make_label,
    mix_inputs,
    synth_dataset,
    train,
)

__version__ = "0.1.0"
