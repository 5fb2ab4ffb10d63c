"""White-box evasion attacks: FGSM, FGM, PGD (Linf/L2) and L2 DeepFool.

Every attack is a pure function of ``(cfg, model, sample)``. Results always
stay inside the unit box and inside the epsilon-ball of the config's norm.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn import NeuralModel, Sample, input_gradient, logit_jacobian, predict_class
from .numcore import L2, LINF, NORMS, Rng, norm, sign

FGSM = "FGSM"
FGM = "FGM"
PGD = "PGD"
LINF_PGD = "LinfPGD"
L2_PGD = "L2PGD"
L2_DEEPFOOL = "L2DeepFool"
FAMILIES = (FGSM, FGM, PGD, LINF_PGD, L2_PGD, L2_DEEPFOOL)

FAMILY_NORM = {
    FGSM: LINF,
    FGM: L2,
    PGD: LINF,
    LINF_PGD: LINF,
    L2_PGD: L2,
    L2_DEEPFOOL: L2,
}
_DEFAULTS = {
    FGSM: dict(epsilon=0.03, steps=1),
    FGM: dict(epsilon=5.0, steps=1),
    PGD: dict(epsilon=0.03, steps=10),
    LINF_PGD: dict(epsilon=0.1, steps=10),
    L2_PGD: dict(epsilon=5.0, steps=10),
    L2_DEEPFOOL: dict(epsilon=5.0, steps=10),
}
DEEPFOOL_OVERSHOOT = 0.02
MIN_EPS_TOL = 1e-4


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters for one attack family.

    ``step_size`` of ``None`` means ``2.5 * epsilon / steps`` for PGD. The
    ``minimal`` flag switches FGSM to a bisection search for the smallest
    successful step within ``[0, epsilon]``; ``random_start`` starts PGD from
    a uniform point in the ball (needs an ``rng`` at call time).
    """

    family: str
    epsilon: float
    steps: int = 1
    step_size: float | None = None
    overshoot: float = 0.0
    norm: str | None = None
    minimal: bool = False
    random_start: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown attack family {self.family!r}; expected one of {FAMILIES}")
        expected = FAMILY_NORM[self.family]
        if self.norm is None:
            object.__setattr__(self, "norm", expected)
        elif self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        elif self.norm != expected:
            raise ValueError(f"{self.family} uses the {expected} norm, got {self.norm}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if int(self.steps) < 1:
            raise ValueError("steps must be a positive count")
        object.__setattr__(self, "steps", int(self.steps))
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.overshoot < 0:
            raise ValueError("overshoot must be >= 0")

    @classmethod
    def default(cls, family: str, **overrides) -> "AttackConfig":
        """The experiment's hyperparameters for ``family``."""
        if family not in FAMILIES:
            raise ValueError(f"unknown attack family {family!r}")
        params = dict(_DEFAULTS[family])
        if family == L2_DEEPFOOL:
            params["overshoot"] = DEEPFOOL_OVERSHOOT
        params.update(overrides)
        return cls(family=family, **params)

    @property
    def alpha(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.epsilon / self.steps

    def to_dict(self) -> dict:
        return asdict(self)


def default_configs() -> list[AttackConfig]:
    return [AttackConfig.default(f) for f in FAMILIES]


@dataclass(frozen=True)
class AttackResult:
    x_adv: np.ndarray
    iterations_used: int
    success: bool
    perturbation_norm: float


def project(delta, epsilon: float, order: str) -> np.ndarray:
    """Nearest point to ``delta`` inside the epsilon-ball of the given norm."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    delta = np.asarray(delta, dtype=np.float64)
    if order == LINF:
        return np.clip(delta, -epsilon, epsilon)
    if order == L2:
        n = norm(delta, L2)
        if n > epsilon:
            return delta * (epsilon / n)
        return delta
    raise ValueError(f"unknown norm order {order!r}")


def _clamp(x):
    return np.clip(x, 0.0, 1.0)


def _check(model: NeuralModel, s: Sample):
    if s.x0.shape[0] != model.input_dim:
        raise ValueError(
            f"sample has {s.x0.shape[0]} features, model {model.model_id!r} expects {model.input_dim}"
        )


def _result(model, s, cfg, x_adv, iterations):
    pert = norm(x_adv - s.x0, cfg.norm)
    success = predict_class(model, x_adv) != s.label
    return AttackResult(x_adv, iterations, success, pert)


def _require(cfg: AttackConfig, *families):
    if cfg.family not in families:
        raise ValueError(f"config family {cfg.family} is not handled here (expected {families})")


def fgsm(model: NeuralModel, s: Sample, cfg: AttackConfig) -> AttackResult:
    """One signed-gradient step of size epsilon, clamped to the unit box."""
    _require(cfg, FGSM)
    _check(model, s)
    direction = sign(input_gradient(model, s).g)
    if not cfg.minimal:
        return _result(model, s, cfg, _clamp(s.x0 + cfg.epsilon * direction), 1)

    def fooled(eps):
        return predict_class(model, _clamp(s.x0 + eps * direction)) != s.label

    if not fooled(cfg.epsilon):
        return _result(model, s, cfg, _clamp(s.x0 + cfg.epsilon * direction), 1)
    lo, hi, evals = 0.0, cfg.epsilon, 1
    while hi - lo > MIN_EPS_TOL:
        mid = 0.5 * (lo + hi)
        evals += 1
        if fooled(mid):
            hi = mid
        else:
            lo = mid
    return _result(model, s, cfg, _clamp(s.x0 + hi * direction), evals)


def fgm(model: NeuralModel, s: Sample, cfg: AttackConfig) -> AttackResult:
    """One step of L2 length epsilon along the normalised gradient."""
    _require(cfg, FGM)
    _check(model, s)
    g = input_gradient(model, s).g
    gn = norm(g, L2)
    if gn == 0.0:
        return _result(model, s, cfg, s.x0.copy(), 1)
    return _result(model, s, cfg, _clamp(s.x0 + cfg.epsilon * g / gn), 1)


def pgd(model: NeuralModel, s: Sample, cfg: AttackConfig, rng: Rng | None = None) -> AttackResult:
    """Iterated gradient steps, re-projected onto the epsilon-ball after each one."""
    _require(cfg, PGD, LINF_PGD, L2_PGD)
    _check(model, s)
    x0, eps, alpha = s.x0, cfg.epsilon, cfg.alpha
    x = x0.copy()
    if cfg.random_start:
        if rng is None:
            raise ValueError("random_start needs an rng")
        if cfg.norm == LINF:
            start = rng.uniform(-eps, eps, size=x0.shape)
        else:
            d = rng.normal(size=x0.shape)
            start = d / norm(d, L2) * eps * rng.uniform() ** (1.0 / x0.size)
        x = _clamp(x0 + start)
    for _ in range(cfg.steps):
        g = input_gradient(model, Sample(x, s.label)).g
        if cfg.norm == LINF:
            x = x + alpha * sign(g)
        else:
            gn = norm(g, L2)
            if gn > 0.0:
                x = x + alpha * g / gn
        x = _clamp(x0 + project(x - x0, eps, cfg.norm))
    return _result(model, s, cfg, x, cfg.steps)


def deepfool_l2(model: NeuralModel, s: Sample, cfg: AttackConfig) -> AttackResult:
    """Step to the nearest linearised class boundary until the label flips."""
    _require(cfg, L2_DEEPFOOL)
    _check(model, s)
    x0, true = s.x0, s.label
    x = x0.copy()
    used = 0
    for _ in range(cfg.steps):
        f, jac = logit_jacobian(model, x)
        if int(np.argmax(f)) != true:
            break
        best = None
        for k in range(model.class_count):
            if k == true:
                continue
            w = jac[k] - jac[true]
            wn = norm(w, L2)
            if wn < 1e-12:
                continue
            dist = abs(f[k] - f[true]) / wn
            if best is None or dist < best[0]:
                best = (dist, w, wn)
        if best is None:
            return AttackResult(x0.copy(), used, False, 0.0)
        dist, w, wn = best
        x = _clamp(x + (1.0 + cfg.overshoot) * dist * w / wn)
        used += 1
    x = _clamp(x0 + project(x - x0, cfg.epsilon, L2))
    return _result(model, s, cfg, x, used)


def run_attack(cfg: AttackConfig, model: NeuralModel, s: Sample, rng: Rng | None = None) -> AttackResult:
    if cfg.family == FGSM:
        return fgsm(model, s, cfg)
    if cfg.family == FGM:
        return fgm(model, s, cfg)
    if cfg.family in (PGD, LINF_PGD, L2_PGD):
        return pgd(model, s, cfg, rng)
    if cfg.family == L2_DEEPFOOL:
        return deepfool_l2(model, s, cfg)
    raise ValueError(f"unknown attack family {cfg.family!r}")
