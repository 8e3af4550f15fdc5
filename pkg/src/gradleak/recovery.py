"""Label and feature recovery from final-layer gradients.

Each row r of the classifier head's weight gradient is the layer input
scaled by (p_r - y_r), where p is the softmax output and y the training
label. Recovery therefore reduces to a one-dimensional search: pick the row
g with the largest absolute sum, form the ratio vector c (c_i estimates
(p_i - y_i)/(p_r - y_r)), and evaluate the candidate label

    label(lam) = softmax(W (lam * g) + b) - c / lam .

At the true scalar lam* = 1/(p_r - y_r) the candidate reproduces the exact
training label and lam* * g equals the layer's input. The search scores
candidates with a loss that is zero exactly at labels with the right
structure (equal non-top entries for smoothing, zero non-top-two entries
for mixup), first with a monotone gradient descent from +-initial and then,
if that stalls in a local minimum, with a windowed particle swarm sweep.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, MixupExtractionError, ShapeError
from .tensor import RngHandle, softmax, softmax_rows
from .victim import MIXUP, GradientCapture, LayerSpec, MlpModel

VARIANCE = "variance"
SQUARE_SUM = "square_sum"
NEGATIVITY = "negativity"
LOSS_KINDS = (VARIANCE, SQUARE_SUM, NEGATIVITY)

ENGINE_AUTO = "auto"
ENGINE_GRADIENT = "gradient"
ENGINE_PSO = "pso"


class Status(enum.Enum):
    SUCCESS = "success"
    DEGENERATE_ONE_HOT_RESOLVED = "degenerate_one_hot_resolved"
    DEGENERATE_ONE_HOT_AMBIGUOUS = "degenerate_one_hot_ambiguous"
    BOUND_EXCEEDED = "bound_exceeded"
    FAILED = "failed"


@dataclass
class RecoveryConfig:
    """Search hyperparameters.

    The gradient engine runs ``iteration`` loss evaluations split between a
    start at +initial and a restart at -initial, declaring success when the
    scaled loss drops below ``threshold`` and giving up past ``bound``. The
    swarm engine sweeps windows [lower - 0.3, lower + interval] of the
    scalar axis outward from ``initial``, mirroring each window to the
    negative side, with ``pop`` particles for ``max_iter`` steps per window.

    ``noise_std`` declares the standard deviation of any noise known to have
    been added to the head gradient; it relaxes the success threshold by the
    achievable loss floor (see ``noise_margin``) and is zero for clean runs.
    """

    initial: float = 1.0
    lr: float = 0.5
    bound: float = 100.0
    iteration: int = 200
    coe: float = 4.0
    pop: int = 200
    max_iter: int = 30
    interval: float = 5.0
    loss_scale: float = 1000.0
    threshold: float = 1e-9
    loss: str = VARIANCE
    exclusion: int = 1  # top entries excluded from the loss: 1 smoothing, 2 mixup
    inertia: float = 0.8
    cognitive: float = 0.5
    social: float = 0.5
    engine: str = ENGINE_AUTO
    noise_std: float = 0.0
    noise_margin: float = 6.0

    def __post_init__(self):
        if not (self.bound > abs(self.initial) > 0):
            raise ConfigError("need bound > |initial| > 0")
        if self.threshold <= 0:
            raise ConfigError("threshold must be positive")
        if min(self.pop, self.max_iter, self.iteration) < 1:
            raise ConfigError("pop, max_iter and iteration must be >= 1")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.exclusion not in (1, 2):
            raise ConfigError("exclusion set size must be 1 or 2")
        if self.engine not in (ENGINE_AUTO, ENGINE_GRADIENT, ENGINE_PSO):
            raise ConfigError(f"unknown engine {self.engine!r}")


@dataclass
class PseudoLabelContext:
    """Precomputed quantities the candidate-label evaluator needs.

    ``row`` is the picked head-gradient row in its raw scale and ``row_scaled``
    the same row multiplied by the configured coefficient; ``ratios`` holds c
    with c_r = 1 exactly. ``logit_dir`` caches W @ row so a candidate's logits
    are just lam * logit_dir (+ bias).
    """

    weight: np.ndarray
    bias: np.ndarray | None
    row_index: int
    row: np.ndarray
    coe: float
    ratios: np.ndarray
    logit_dir: np.ndarray
    exclusion: int
    loss: str
    loss_scale: float

    @property
    def row_scaled(self) -> np.ndarray:
        return self.coe * self.row

    @property
    def class_count(self) -> int:
        return self.weight.shape[0]


def build_context(capture: GradientCapture, head: LayerSpec,
                  config: RecoveryConfig) -> PseudoLabelContext:
    """Pick the gradient row with maximal absolute sum and form the ratios.

    The ratio vector is computed as a least-squares projection of every row
    onto the picked one, <g_i, g_r> / <g_r, g_r>. For clean gradients this
    equals the itemwise division of any nonzero entry; under additive noise
    it remains defined and averages the noise down.
    """
    grad = np.asarray(capture.last_weight_grad, dtype=np.float64)
    if grad.shape != head.weight.shape:
        raise ShapeError("head gradient shape does not match the head weight")
    l1 = np.abs(grad).sum(axis=1)
    if l1.max() == 0.0:
        raise DomainError("all-zero head gradient: degenerate one-hot case")
    r = int(np.argmax(l1))
    row = grad[r]
    ratios = grad @ row / float(row @ row)
    ratios[r] = 1.0
    return PseudoLabelContext(
        weight=head.weight,
        bias=head.bias,
        row_index=r,
        row=row,
        coe=float(config.coe),
        ratios=ratios,
        logit_dir=head.weight @ row,
        exclusion=config.exclusion,
        loss=config.loss,
        loss_scale=config.loss_scale,
    )


def pseudo_label(ctx: PseudoLabelContext, lam: float) -> np.ndarray:
    """Candidate label at scalar ``lam``; its entries always sum to one."""
    if lam == 0.0:
        raise DomainError("lam must be nonzero")
    z = lam * ctx.logit_dir
    if ctx.bias is not None:
        z = z + ctx.bias
    return softmax(z) - ctx.ratios / lam


def pseudo_label_batch(ctx: PseudoLabelContext, lams: np.ndarray) -> np.ndarray:
    """Candidate labels for a whole vector of scalars, one per output row."""
    lams = np.asarray(lams, dtype=np.float64)
    if np.any(lams == 0.0):
        raise DomainError("lam must be nonzero")
    z = np.outer(lams, ctx.logit_dir)
    if ctx.bias is not None:
        z = z + ctx.bias
    return softmax_rows(z) - ctx.ratios[None, :] / lams[:, None]


def _exclusion_mask(labels: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of kept (non-excluded) entries; ties go to lower indexes."""
    top = np.argsort(-labels, axis=1, kind="stable")[:, :k]
    keep = np.ones_like(labels, dtype=bool)
    np.put_along_axis(keep, top, False, axis=1)
    return keep


def _loss_batch(labels: np.ndarray, kind: str, k: int, scale: float) -> np.ndarray:
    if kind == NEGATIVITY:
        return np.abs(labels).sum(axis=1) - 1.0
    keep = _exclusion_mask(labels, k)
    kept = np.where(keep, labels, np.nan)
    if kind == VARIANCE:
        mean = np.nanmean(kept, axis=1)
        return scale * np.nanmean((kept - mean[:, None]) ** 2, axis=1)
    if kind == SQUARE_SUM:
        return scale * np.nanmean(kept**2, axis=1)
    raise ConfigError(f"unknown loss {kind!r}")


def label_loss(label: np.ndarray, kind: str = VARIANCE, exclusion: int = 1,
               loss_scale: float = 1000.0) -> float:
    """Score a candidate label.

    variance: scaled mean squared deviation of the non-top entries from
    their mean (top entries are re-picked on every call). square_sum: scaled
    mean of the squared non-top entries. negativity: sum of absolute entries
    minus one, zero exactly when no entry is negative.
    """
    label = np.asarray(label, dtype=np.float64)
    if label.shape[0] <= exclusion and kind != NEGATIVITY:
        raise ShapeError("label needs more entries than the exclusion set")
    return float(_loss_batch(label[None, :], kind, exclusion, loss_scale)[0])


def _ctx_loss(ctx: PseudoLabelContext, lam: float) -> float:
    return label_loss(pseudo_label(ctx, lam), ctx.loss, ctx.exclusion, ctx.loss_scale)


def _ctx_loss_batch(ctx: PseudoLabelContext, lams: np.ndarray) -> np.ndarray:
    return _loss_batch(pseudo_label_batch(ctx, lams), ctx.loss, ctx.exclusion,
                       ctx.loss_scale)


def scan_losses(ctx: PseudoLabelContext, lams: np.ndarray) -> np.ndarray:
    """Scaled loss at every scalar in ``lams``; the landscape-plot helper."""
    return _ctx_loss_batch(ctx, lams)


def pseudo_label_derivative(ctx: PseudoLabelContext, lam: float) -> np.ndarray:
    """d label / d lam through the softmax Jacobian and the c/lam term."""
    if lam == 0.0:
        raise DomainError("lam must be nonzero")
    z = lam * ctx.logit_dir
    if ctx.bias is not None:
        z = z + ctx.bias
    p = softmax(z)
    u = ctx.logit_dir
    return p * (u - p @ u) + ctx.ratios / lam**2


def loss_derivative(ctx: PseudoLabelContext, lam: float) -> float:
    """Analytic d loss / d lam at ``lam`` (chain rule, exclusion held fixed)."""
    y = pseudo_label(ctx, lam)
    dy = pseudo_label_derivative(ctx, lam)
    if ctx.loss == NEGATIVITY:
        return float(np.sign(y) @ dy)
    keep = _exclusion_mask(y[None, :], ctx.exclusion)[0]
    v, dv = y[keep], dy[keep]
    n = v.shape[0]
    if ctx.loss == VARIANCE:
        centred = v - v.mean()
        return float(ctx.loss_scale * 2.0 / n * (centred @ (dv - dv.mean())))
    return float(ctx.loss_scale * 2.0 / n * (v @ dv))


def _success_threshold(ctx: PseudoLabelContext, config: RecoveryConfig,
                       lam: float) -> float:
    """Threshold adjusted for the loss floor set by declared gradient noise.

    The floor has two parts, both computed over exactly the entries the
    loss measures (the non-excluded ones): the ratio vector inherits
    per-entry noise of std sigma * sqrt(1 + c_i^2) / ||g|| which lands on
    the label divided by lam, and the logits inherit noise through
    W @ (noisy row), scaled back up by lam. Everything is attacker-visible.
    """
    if config.noise_std <= 0.0:
        return config.threshold
    sigma = config.noise_std
    keep = _exclusion_mask(pseudo_label(ctx, lam)[None, :], ctx.exclusion)[0]
    row_sq = float(ctx.row @ ctx.row)
    var_div = (sigma**2 * float(np.mean(1.0 + ctx.ratios[keep] ** 2))
               / (row_sq * lam**2))
    z = lam * ctx.logit_dir
    if ctx.bias is not None:
        z = z + ctx.bias
    p = softmax(z)
    centred = ctx.weight - p @ ctx.weight
    per_entry = p**2 * (centred**2).sum(axis=1)
    var_sm = sigma**2 * lam**2 * float(np.mean(per_entry[keep]))
    floor = config.noise_margin * config.loss_scale * (var_div + var_sm)
    return config.threshold + floor


@dataclass
class RecoveryResult:
    status: Status
    lam: float = float("nan")
    label: np.ndarray | None = None
    feature: np.ndarray | None = None
    final_loss: float = float("nan")
    trace: list = field(default_factory=list)  # (lam, scaled loss) samples
    row: int | None = None
    engine: str | None = None
    candidates: tuple | None = None

    @property
    def success(self) -> bool:
        return self.status is Status.SUCCESS


def _descent_phase(ctx, config, start, budget, trace):
    """Monotone descent from ``start``: secant-curvature steps with
    backtracking, falling back to a plain gradient step when curvature is
    unusable. Returns (flag, lam, loss, evals)."""
    lam = float(start)
    f = _ctx_loss(ctx, lam)
    trace.append((lam, f))
    evals = 1
    g = loss_derivative(ctx, lam)
    prev = None
    while evals < budget:
        if f < _success_threshold(ctx, config, lam):
            return "success", lam, f, evals
        if abs(lam) > config.bound:
            return "bound", lam, f, evals
        step = None
        if prev is not None:
            dlam, dgrad = lam - prev[0], g - prev[1]
            if dlam != 0.0 and dgrad / dlam > 0.0:
                step = -g / (dgrad / dlam)  # secant-Newton step
        if step is None or abs(step) > 10.0 * max(1.0, abs(lam)):
            step = -config.lr * g if abs(g) < 1e3 else -config.lr * np.sign(g)
        scale, accepted = 1.0, False
        while evals < budget:
            cand = lam + scale * step
            if cand != 0.0:
                f_cand = _ctx_loss(ctx, cand)
                evals += 1
                if f_cand <= f:
                    prev = (lam, g)
                    lam, f = cand, f_cand
                    trace.append((lam, f))
                    g = loss_derivative(ctx, lam)
                    accepted = True
                    break
            scale *= 0.5
            if scale < 1e-20:
                break
        if not accepted:
            return "stall", lam, f, evals
    if f < _success_threshold(ctx, config, lam):
        return "success", lam, f, evals
    return "exhausted", lam, f, evals


def search_gradient(ctx: PseudoLabelContext, config: RecoveryConfig) -> RecoveryResult:
    """Gradient-based search: half the budget from +initial, then a restart
    from -initial; accepted loss never increases within a phase."""
    trace: list = []
    half = max(1, config.iteration // 2)
    for start, budget in ((config.initial, half),
                          (-config.initial, max(1, config.iteration - half))):
        flag, lam, f, _ = _descent_phase(ctx, config, start, budget, trace)
        if flag == "success":
            # Settle into the bottom of the basin so the recovered feature is
            # exact to near machine precision, not just threshold precision.
            width = 1e-2 * max(1.0, abs(lam))
            lam2, f2 = _golden_refine(ctx, lam, width, lam - width, lam + width)
            if f2 <= f:
                lam, f = lam2, f2
            trace.append((lam, f))
            return RecoveryResult(Status.SUCCESS, lam, final_loss=f, trace=trace,
                                  row=ctx.row_index, engine=ENGINE_GRADIENT)
        if start > 0:
            flag1, lam1, f1 = flag, lam, f
    status = Status.BOUND_EXCEEDED if "bound" in (flag1, flag) else Status.FAILED
    best = (lam1, f1) if f1 <= f else (lam, f)
    return RecoveryResult(status, best[0], final_loss=best[1], trace=trace,
                          row=ctx.row_index, engine=ENGINE_GRADIENT)


def _golden_refine(ctx, center, half, lo, hi, iters=60):
    """Deterministic golden-section polish of a swarm optimum."""
    a = max(lo, center - half)
    b = min(hi, center + half)
    if a < 0.0 < b:  # never evaluate across the lam = 0 singularity
        if center > 0.0:
            a = max(a, 1e-12)
        else:
            b = min(b, -1e-12)
    if not a < b:
        return center, _ctx_loss(ctx, center)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - invphi * (b - a), a + invphi * (b - a)
    f1, f2 = _ctx_loss(ctx, x1), _ctx_loss(ctx, x2)
    for _ in range(iters):
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = _ctx_loss(ctx, x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = _ctx_loss(ctx, x2)
    return (x1, f1) if f1 < f2 else (x2, f2)


def _pso_window(ctx, config, lo, hi, rng: RngHandle):
    """One particle-swarm run inside [lo, hi], then a local polish."""
    pop = config.pop
    span = hi - lo
    x = rng.uniform(lo, hi, size=pop)
    v = rng.uniform(-span, span, size=pop) * 0.5
    f = _ctx_loss_batch(ctx, x)
    pbest, pf = x.copy(), f.copy()
    gi = int(np.argmin(pf))
    gbest, gf = float(pbest[gi]), float(pf[gi])
    for _ in range(config.max_iter):
        r1 = rng.uniform(size=pop)
        r2 = rng.uniform(size=pop)
        v = (config.inertia * v + config.cognitive * r1 * (pbest - x)
             + config.social * r2 * (gbest - x))
        x = np.clip(x + v, lo, hi)
        f = _ctx_loss_batch(ctx, x)
        better = f < pf
        pbest[better], pf[better] = x[better], f[better]
        gi = int(np.argmin(pf))
        if pf[gi] < gf:
            gbest, gf = float(pbest[gi]), float(pf[gi])
    lam, fl = _golden_refine(ctx, gbest, 4.0 * span / pop, lo, hi)
    return (lam, fl) if fl < gf else (gbest, gf)


def search_pso(ctx: PseudoLabelContext, config: RecoveryConfig,
               rng: RngHandle) -> RecoveryResult:
    """Windowed particle-swarm sweep.

    Windows [lower - 0.3, lower + interval] march from ``initial`` toward
    ``bound``; each positive window that fails is mirrored to
    [-upper - 0.3, -lower] before moving outward. Success as soon as the
    scaled loss clears the (noise-adjusted) threshold. Deterministic for a
    fixed rng seed.
    """
    trace: list = []
    lo = config.initial
    hi = lo + config.interval
    best = (float("nan"), float("inf"))
    while hi < config.bound:
        for a, b in ((lo - 0.3, hi), (-hi - 0.3, -lo)):
            lam, f = _pso_window(ctx, config, a, b, rng)
            trace.append((lam, f))
            if f < best[1]:
                best = (lam, f)
            if f < _success_threshold(ctx, config, lam):
                return RecoveryResult(Status.SUCCESS, lam, final_loss=f,
                                      trace=trace, row=ctx.row_index,
                                      engine=ENGINE_PSO)
        lo, hi = hi, hi + config.interval
    return RecoveryResult(Status.FAILED, best[0], final_loss=best[1], trace=trace,
                          row=ctx.row_index, engine=ENGINE_PSO)


def _one_hot(index: int, count: int) -> np.ndarray:
    v = np.zeros(count)
    v[index] = 1.0
    return v


def recover(capture: GradientCapture, model: MlpModel, config: RecoveryConfig,
            rng: RngHandle) -> RecoveryResult:
    """Full recovery pipeline for a single example's gradients.

    Degenerate one-hot cases short-circuit: an all-zero head gradient means
    the model predicted its own label with full confidence (the stored
    prediction is returned), and exactly two opposite nonzero rows leave the
    true class genuinely undecidable (both candidates are reported). All
    other captures go through the gradient engine and then, if needed, the
    swarm engine. On success the recovered layer input is lam * g, i.e. the
    scaled row divided back by the coefficient.
    """
    head = model.layers[-1]
    grad = np.asarray(capture.last_weight_grad, dtype=np.float64)
    C = grad.shape[0]

    if np.abs(grad).max() == 0.0:
        return RecoveryResult(Status.DEGENERATE_ONE_HOT_RESOLVED,
                              label=_one_hot(capture.prediction, C),
                              final_loss=0.0)
    nonzero = np.flatnonzero(np.abs(grad).sum(axis=1) > 0.0)
    if len(nonzero) == 2:
        i, j = int(nonzero[0]), int(nonzero[1])
        scale = max(1.0, np.abs(grad[i]).max())
        if np.max(np.abs(grad[i] + grad[j])) <= 1e-9 * scale:
            return RecoveryResult(Status.DEGENERATE_ONE_HOT_AMBIGUOUS,
                                  candidates=(i, j))

    ctx = build_context(capture, head, config)
    results = []
    if config.engine in (ENGINE_AUTO, ENGINE_GRADIENT):
        results.append(search_gradient(ctx, config))
    if config.engine == ENGINE_PSO or (config.engine == ENGINE_AUTO
                                       and not results[-1].success):
        results.append(search_pso(ctx, config, rng))

    trace = [pt for res in results for pt in res.trace]
    final = results[-1]
    if final.success:
        lam = final.lam
        label = pseudo_label(ctx, lam)
        feature = lam * ctx.row  # equals lam * row_scaled / coe
        return RecoveryResult(Status.SUCCESS, lam, label=label, feature=feature,
                              final_loss=final.final_loss, trace=trace,
                              row=ctx.row_index, engine=final.engine)
    status = final.status
    if any(r.status is Status.BOUND_EXCEEDED for r in results):
        status = Status.BOUND_EXCEEDED
    return RecoveryResult(status, final.lam, final_loss=final.final_loss,
                          trace=trace, row=ctx.row_index, engine=final.engine)


@dataclass
class IdlgResult:
    """Outcome of the sign-opposition baseline for hard labels."""

    class_index: int | None
    label: np.ndarray | None
    ambiguous: bool
    candidates: tuple


def idlg_baseline(capture: GradientCapture) -> IdlgResult:
    """One-hot label via gradient signs.

    For a one-hot label the true class is the unique head-gradient row whose
    sign opposes every other row (its entry p_r - y_r is the only negative
    one). Rows are compared by inner product, which for rank-one gradients
    equals the sign product of their scale factors. When no single row
    opposes all others the call flags ambiguity instead of guessing; soft
    labels routinely break the premise and land here or return a one-hot
    that is not the training label.
    """
    grad = np.asarray(capture.last_weight_grad, dtype=np.float64)
    C = grad.shape[0]
    nonzero = [int(i) for i in np.flatnonzero(np.abs(grad).sum(axis=1) > 0.0)]
    if len(nonzero) < 2:
        return IdlgResult(None, None, True, tuple(nonzero))
    opposed = []
    for i in nonzero:
        if all(grad[i] @ grad[j] < 0.0 for j in nonzero if j != i):
            opposed.append(i)
    if len(opposed) == 1:
        cls = opposed[0]
        return IdlgResult(cls, _one_hot(cls, C), False, (cls,))
    return IdlgResult(None, None, True, tuple(opposed))


def extract_mixup(label: np.ndarray) -> tuple[int, int, float]:
    """Read (class_a, class_b, coefficient) out of a recovered mixup label.

    The two largest entries are the mixed classes (ties resolved toward the
    lower index); the coefficient is the larger entry after subtracting the
    mean of the background entries. Rejects labels whose top two entries are
    not separated from the background by more than ten background standard
    deviations.
    """
    label = np.asarray(label, dtype=np.float64)
    order = np.argsort(-label, kind="stable")
    a_idx, b_idx = int(order[0]), int(order[1])
    background = label[order[2:]]
    bg_mean = float(background.mean()) if background.size else 0.0
    bg_std = float(background.std()) if background.size else 0.0
    if label[b_idx] - bg_mean <= 10.0 * bg_std:
        raise MixupExtractionError("top-2 entries not separated from background")
    coeff = float(label[a_idx] - bg_mean)
    if not 0.0 < coeff < 1.0:
        raise MixupExtractionError(f"mixture coefficient {coeff:.4f} outside (0, 1)")
    return a_idx, b_idx, coeff


def with_exclusion_for(config: RecoveryConfig, label_kind: str) -> RecoveryConfig:
    """Copy of the config with the exclusion size implied by the label kind."""
    return replace(config, exclusion=2 if label_kind == MIXUP else 1)
