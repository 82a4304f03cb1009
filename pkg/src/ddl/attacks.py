"""Adversarial test-set generation: FGSM and the saliency-map attack (JSMA).

FGSM takes one step along the loss gradient (sign of it by default, the
raw gradient via a flag). JSMA iteratively bumps the single input feature
whose saliency, built from the forward Jacobian, most pushes the
prediction toward a target class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .mlp import MlpModel, forward_jacobian, input_gradient, predict


@dataclass
class AttackConfig:
    kind: str = "fgsm"  # "fgsm" | "jsma"
    epsilon: float = 0.3  # fgsm step, fraction of the unit dynamic range
    fgsm_variant: str = "sign"  # "sign" | "raw"
    theta: float = 1.0  # jsma per-feature increment
    max_features: int = 80  # jsma distortion budget
    target_policy: str = "next"  # "next" | "fixed:<k>"
    use_logits: bool = False  # saliency from logits instead of probabilities

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.max_features < 0:
            raise ValueError("max_features must be >= 0")
        if self.fgsm_variant not in ("sign", "raw"):
            raise ValueError(f"unknown fgsm variant {self.fgsm_variant!r}")


@dataclass
class AttackResult:
    adversarial: np.ndarray  # same shape as the input image
    success: bool  # prediction != true label
    hit_target: bool  # prediction == target class (targeted attacks)
    features_changed: int
    iterations: int


def fgsm_perturb(
    model: MlpModel, img: np.ndarray, label: int, epsilon: float, variant: str = "sign"
) -> AttackResult:
    """One gradient step of size epsilon, clamped to [0, 1].

    The sign variant moves every pixel by exactly +-epsilon (or 0 where the
    gradient is 0); the raw variant adds epsilon times the gradient itself.
    """
    x = img.reshape(-1)
    grad = input_gradient(model, x, label)
    if variant == "sign":
        step = epsilon * np.sign(grad)
    else:
        step = epsilon * grad
    adv = np.clip(x + step, 0.0, 1.0)
    pred = int(predict(model, adv))
    return AttackResult(
        adversarial=adv.reshape(img.shape),
        success=pred != label,
        hit_target=False,
        features_changed=int(np.count_nonzero(adv != x)),
        iterations=1,
    )


def jsma_saliency(jacobian: np.ndarray, target: int, eligible: np.ndarray) -> np.ndarray:
    """Saliency of each input feature toward the target class.

    A feature scores 0 when its target derivative is negative or the summed
    derivative of the other classes is positive; otherwise it scores the
    target derivative times the magnitude of the other-class sum.
    Ineligible features get -inf so they are never selected.
    """
    grad_target = jacobian[target]
    grad_others = jacobian.sum(axis=0) - grad_target
    rejected = (grad_target < 0) | (grad_others > 0)
    saliency = np.where(rejected, 0.0, grad_target * np.abs(grad_others))
    saliency[~eligible] = -np.inf
    return saliency


def resolve_target(policy: str, label: int, num_classes: int) -> int:
    if policy == "next":
        return (label + 1) % num_classes
    if policy.startswith("fixed:"):
        target = int(policy.split(":", 1)[1])
        if not (0 <= target < num_classes):
            raise ValueError(f"target {target} outside [0, {num_classes})")
        return target
    raise ValueError(f"unknown target policy {policy!r}")


def jsma_attack(model: MlpModel, img: np.ndarray, label: int, config: AttackConfig) -> AttackResult:
    """Greedy targeted attack: raise the most salient feature until the
    prediction flips to the target, the budget runs out, or no feature with
    positive saliency remains.

    Each iteration modifies exactly one feature by theta (clamped to 1);
    saturated features become ineligible.
    """
    target = resolve_target(config.target_policy, label, model.output_dim)
    if target == label:
        raise ValueError("jsma target must differ from the true label")
    x = img.reshape(-1).copy()
    eligible = x < 1.0
    pred = int(predict(model, x))
    iterations = 0
    while iterations < config.max_features and pred != target:
        jac = forward_jacobian(model, x, on_logits=config.use_logits)
        saliency = jsma_saliency(jac, target, eligible)
        m = int(np.argmax(saliency))
        if saliency[m] <= 0.0:
            break
        x[m] = min(1.0, x[m] + config.theta)
        if x[m] >= 1.0:
            eligible[m] = False
        iterations += 1
        pred = int(predict(model, x))
    return AttackResult(
        adversarial=x.reshape(img.shape),
        success=pred != label,
        hit_target=pred == target,
        features_changed=iterations,
        iterations=iterations,
    )


def attack_dataset(model: MlpModel, ds: LabeledDataset, config: AttackConfig):
    """Attack every image; returns (adversarial dataset, per-image results)."""
    results = []
    for img, label in zip(ds.images, ds.labels):
        if config.kind == "fgsm":
            results.append(fgsm_perturb(model, img, int(label), config.epsilon, config.fgsm_variant))
        elif config.kind == "jsma":
            results.append(jsma_attack(model, img, int(label), config))
        else:
            raise ValueError(f"unknown attack kind {config.kind!r}")
    images = (
        np.stack([r.adversarial for r in results]) if results else ds.images.copy()
    )
    adversarial = LabeledDataset(images, ds.labels.copy(), ds.num_classes)
    return adversarial, results
