"""
Finite-Difference Gradient Check

Compares autograd gradients of the full training objective with central
differences on tiny random bags, for every named parameter tensor.

The ranking selections are computed once per instance and held fixed, and
instances whose ReLU inputs sit within KINK_MARGIN of zero are redrawn, so
the objective is smooth within one finite-difference step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from attgnn import graph_tensors
from bagio import Bag
from graphbuild import build_hybrid_graph

from .config import TrainConfig
from .model import RacrMil
from .objective import select_all, total_loss

logger = logging.getLogger(__name__)

STEP = 1e-4
REL_TOL = 1e-4
ABS_TOL = 1e-7
KINK_MARGIN = 1e-3
MAX_REDRAWS = 200

LOSS_MODES = {
    "default": {"grade_loss_mode": "softmax", "intra_loss_mode": "ranknet", "diversity_mode": "decorrelate"},
    "literal": {"grade_loss_mode": "literal", "intra_loss_mode": "literal", "diversity_mode": "literal"},
}


@dataclass
class TensorCheck:
    instance: int
    mode: str
    name: str
    size: int
    max_abs_err: float
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < REL_TOL


@dataclass
class GradcheckReport:
    checks: List[TensorCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{**c.__dict__, "passed": c.passed} for c in self.checks])

    def failures(self) -> List[TensorCheck]:
        return [c for c in self.checks if not c.passed]


def gradcheck_config(mode: str = "default") -> TrainConfig:
    """Tiny double-precision instance settings: d_h 6, four classes, full lambda1."""
    if mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode {mode!r}; choose from {sorted(LOSS_MODES)}")
    return TrainConfig(
        hidden_dim=6, dropout=0.0, tau=0.5, rank_k=4, warmup_epochs=0,
        lambda1=0.2, lambda2=0.1, **LOSS_MODES[mode],
    )


def random_bags(rng: np.random.Generator, count: int = 2, feature_dim: int = 5, num_classes: int = 4) -> List[Bag]:
    bags = []
    for b in range(count):
        n = int(rng.integers(6, 13))
        cells = rng.choice(25, size=n, replace=False)
        bags.append(Bag(
            f"check_{b}",
            int(rng.integers(0, num_classes)),
            np.stack([cells // 5, cells % 5], axis=1),
            rng.standard_normal((n, feature_dim)).astype(np.float32),
            num_classes=num_classes,
        ))
    return bags


def relu_inputs(model: RacrMil, features: torch.Tensor, graphs: dict) -> torch.Tensor:
    """Every value that passes through a ReLU in one forward pass, flattened."""
    captured = []
    hooks = [model.gnn.project.net[1].register_forward_hook(lambda m, inp, out: captured.append(inp[0]))]
    hooks += [layer.norm.register_forward_hook(lambda m, inp, out: captured.append(out)) for layer in model.gnn.layers]
    try:
        forward = model(features, graphs)
    finally:
        for hook in hooks:
            hook.remove()
    head = model.head
    if head.prototypes is not None:
        captured.append(F.normalize(forward.h1, dim=-1) @ F.normalize(head.prototypes, dim=-1).T / head.tau)
    return torch.cat([c.detach().flatten() for c in captured])


def _instance(cfg: TrainConfig, rng: np.random.Generator):
    """Draw (model, inputs, labels) whose ReLU inputs all clear the kink margin."""
    for _ in range(MAX_REDRAWS):
        bags = random_bags(rng, num_classes=cfg.num_classes)
        torch.manual_seed(int(rng.integers(2 ** 31)))
        model = RacrMil(bags[0].feature_dim, cfg).double().eval()
        inputs = [
            (torch.as_tensor(b.features, dtype=torch.float64), graph_tensors(build_hybrid_graph(b, cfg.diffusion_config())))
            for b in bags
        ]
        with torch.no_grad():
            margin = min(relu_inputs(model, x, g).abs().min().item() for x, g in inputs)
        if margin > KINK_MARGIN:
            return model, inputs, [b.grade for b in bags]
    raise RuntimeError(f"no smooth instance found in {MAX_REDRAWS} draws")


def numeric_gradient(fn: Callable[[], float], tensor: torch.Tensor, step: float = STEP) -> torch.Tensor:
    """Central differences of fn with respect to each element of tensor, perturbed in place."""
    grad = torch.zeros_like(tensor)
    flat, out = tensor.data.view(-1), grad.view(-1)
    for k in range(flat.numel()):
        original = flat[k].item()
        flat[k] = original + step
        plus = fn()
        flat[k] = original - step
        minus = fn()
        flat[k] = original
        out[k] = (plus - minus) / (2.0 * step)
    return grad


def compare(analytic: torch.Tensor, numeric: torch.Tensor) -> Tuple[float, float]:
    """(max abs error, max rel error); elements within ABS_TOL count as exact."""
    diff = (analytic - numeric).abs()
    scale = torch.maximum(analytic.abs(), numeric.abs())
    rel = torch.where(diff < ABS_TOL, torch.zeros_like(diff), diff / scale.clamp_min(1e-300))
    return float(diff.max()), float(rel.max())


def check_instance(cfg: TrainConfig, rng: np.random.Generator, instance: int, mode: str) -> List[TensorCheck]:
    model, inputs, labels = _instance(cfg, rng)
    with torch.no_grad():
        selections = select_all([model(x, g) for x, g in inputs], labels, cfg)

    def objective():
        forwards = [model(x, g) for x, g in inputs]
        return total_loss(model, forwards, labels, cfg, epoch=cfg.warmup_epochs, selections=selections).total

    model.zero_grad()
    objective().backward()
    checks = []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        analytic = param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
        with torch.no_grad():
            numeric = numeric_gradient(lambda: objective().item(), param)
        abs_err, rel_err = compare(analytic, numeric)
        checks.append(TensorCheck(instance, mode, name, param.numel(), abs_err, rel_err))
    return checks


def run_gradcheck(instances: int = 5, seed: int = 0, modes: Iterable[str] = ("default", "literal")) -> GradcheckReport:
    """
    Check every parameter tensor on `instances` random instances per loss mode.

    Returns:
        Report whose `passed` is True iff every tensor's max relative error < 1e-4
    """
    report = GradcheckReport()
    for mode in modes:
        cfg = gradcheck_config(mode)
        rng = np.random.default_rng(seed)
        for instance in range(instances):
            report.checks.extend(check_instance(cfg, rng, instance, mode))
    status = "PASS" if report.passed else "FAIL"
    logger.info("Gradient check over %d tensors: %s", len(report.checks), status)
    return report
