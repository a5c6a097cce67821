"""Completion metrics, the training loss, analytic Chamfer gradients and a toy descent."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels, pcgeom
from .errors import InvalidArgumentError

VARIANTS = ("eq5", "l1-half", "l2-squared")


def _nn(x, y):
    """Nearest-neighbour squared distances and indices, both directions."""
    x = pcgeom.as_cloud(x, "x")
    y = pcgeom.as_cloud(y, "y")
    dx, ix = kernels.nn_search(x, y)
    dy, iy = kernels.nn_search(y, x)
    return x, y, dx, ix, dy, iy


def _check_variant(variant):
    if variant not in VARIANTS:
        raise InvalidArgumentError(f"unknown chamfer variant {variant!r}; choose from {VARIANTS}")


def chamfer_terms(x, y, variant="eq5"):
    """The two directional means ``(x -> y, y -> x)`` of a Chamfer variant."""
    _check_variant(variant)
    _, _, dx, _, dy, _ = _nn(x, y)
    if variant == "l2-squared":
        return float(dx.mean()), float(dy.mean())
    tx, ty = float(np.sqrt(dx).mean()), float(np.sqrt(dy).mean())
    if variant == "l1-half":
        return tx / 2.0, ty / 2.0
    return tx, ty


def chamfer(x, y, variant="eq5"):
    """Symmetric Chamfer distance.

    ``eq5`` sums the mean nearest-neighbour distances of both directions;
    ``l1-half`` is half of that; ``l2-squared`` uses squared distances.
    """
    tx, ty = chamfer_terms(x, y, variant)
    return tx + ty


def chamfer_grad(x, y, variant="eq5"):
    """Gradient of :func:`chamfer` with respect to the points of ``x``.

    Nearest neighbours are taken with the lowest-index tie rule. Coincident
    pairs contribute a zero subgradient for the norm-based variants.
    """
    _check_variant(variant)
    x, y, dx, ix, dy, iy = _nn(x, y)
    nx, ny = x.shape[0], y.shape[0]
    diff_x = x - y[ix]  # x_i - nn_y(x_i)
    diff_y = x[iy] - y  # nn_x(y_j) - y_j, gradient flows to x[iy[j]]
    if variant == "l2-squared":
        gx = 2.0 * diff_x / nx
        gy = 2.0 * diff_y / ny
    else:
        nxd = np.sqrt(dx)
        nyd = np.sqrt(dy)
        gx = np.zeros_like(diff_x)
        gy = np.zeros_like(diff_y)
        np.divide(diff_x, nxd[:, None] * nx, out=gx, where=nxd[:, None] > 0)
        np.divide(diff_y, nyd[:, None] * ny, out=gy, where=nyd[:, None] > 0)
        if variant == "l1-half":
            gx /= 2.0
            gy /= 2.0
    grad = gx.copy()
    np.add.at(grad, iy, gy)
    return grad


def total_loss(p_c, p_1, p_2, p_gt):
    """Sum of three ``eq5`` Chamfer terms, each against FPS-downsampled ground truth."""
    p_gt = pcgeom.as_cloud(p_gt, "p_gt")
    total = 0.0
    for pred in (p_c, p_1, p_2):
        pred = pcgeom.as_cloud(pred, "prediction")
        if pred.shape[0] > p_gt.shape[0]:
            raise InvalidArgumentError(
                f"ground truth has {p_gt.shape[0]} points, fewer than the {pred.shape[0]}-point prediction"
            )
        gt = p_gt[pcgeom.fps(p_gt, pred.shape[0])]
        total += chamfer(pred, gt, "eq5")
    return total


def dcd(x, y, alpha=1000.0):
    """Density-aware Chamfer distance in [0, 1].

    Each point scores ``1 - exp(-alpha * d^2) / n`` where ``d`` is the
    distance to its nearest neighbour on the other side and ``n`` is how
    many points of its own side chose that same neighbour. The result is
    the average of the two directional means.
    """
    if alpha <= 0:
        raise InvalidArgumentError("alpha must be positive")
    x, y, dx, ix, dy, iy = _nn(x, y)
    cnt_x = np.bincount(ix, minlength=y.shape[0])[ix]
    cnt_y = np.bincount(iy, minlength=x.shape[0])[iy]
    tx = np.mean(1.0 - np.exp(-alpha * dx) / cnt_x)
    ty = np.mean(1.0 - np.exp(-alpha * dy) / cnt_y)
    return float((tx + ty) / 2.0)


def precision_recall(x, y, tau=0.01):
    if tau <= 0:
        raise InvalidArgumentError("tau must be positive")
    _, _, dx, _, dy, _ = _nn(x, y)
    return float(np.mean(np.sqrt(dx) <= tau)), float(np.mean(np.sqrt(dy) <= tau))


def f1_score(x, y, tau=0.01):
    """F-score at threshold ``tau``: ``x`` is the prediction, ``y`` the reference."""
    p, r = precision_recall(x, y, tau)
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def mmd(pred, gallery):
    """Smallest l2-squared Chamfer distance to a gallery shape, and its index."""
    if len(gallery) == 0:
        raise InvalidArgumentError("gallery is empty")
    scores = [chamfer(pred, g, "l2-squared") for g in gallery]
    best = int(np.argmin(scores))
    return scores[best], best


def dataset_mmd(preds, gallery):
    return float(np.mean([mmd(p, gallery)[0] for p in preds]))


@dataclass
class MetricReport:
    values: dict = field(default_factory=dict)
    partials: dict = field(default_factory=dict)
    tau: float = 0.01
    alpha: float = 1000.0

    def lines(self):
        out = [f"{k} = {v:.9g}" for k, v in self.values.items()]
        out += [f"{k} = {v:.9g}" for k, v in self.partials.items()]
        out += [f"tau = {self.tau:.9g}", f"alpha_dcd = {self.alpha:.9g}"]
        return out


METRICS = ("cd_eq5", "cd_l1", "cd_l2", "dcd", "f1")


def evaluate(pred, gt, metrics=METRICS, tau=0.01, alpha=1000.0):
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise InvalidArgumentError(f"unknown metrics {sorted(unknown)}; choose from {METRICS}")
    rep = MetricReport(tau=tau, alpha=alpha)
    cd_variants = {"cd_eq5": "eq5", "cd_l1": "l1-half", "cd_l2": "l2-squared"}
    for m in metrics:
        if m in cd_variants:
            a, b = chamfer_terms(pred, gt, cd_variants[m])
            rep.values[m] = a + b
            rep.partials[f"{m}_pred_to_gt"] = a
            rep.partials[f"{m}_gt_to_pred"] = b
        elif m == "dcd":
            rep.values[m] = dcd(pred, gt, alpha)
        elif m == "f1":
            p, r = precision_recall(pred, gt, tau)
            rep.values[m] = 0.0 if p + r == 0 else 2.0 * p * r / (p + r)
            rep.partials["precision"] = p
            rep.partials["recall"] = r
    return rep


def toy_fit(x0, target, steps, lr, variant="l2-squared"):
    """Plain gradient descent of a cloud onto a target under Chamfer loss.

    Returns the final cloud and the loss before each step plus the final loss.
    """
    if steps < 1 or lr <= 0:
        raise InvalidArgumentError("steps must be >= 1 and lr > 0")
    x = pcgeom.as_cloud(x0, "x0").copy()
    target = pcgeom.as_cloud(target, "target")
    curve = []
    for _ in range(steps):
        curve.append(chamfer(x, target, variant))
        x -= lr * chamfer_grad(x, target, variant)
    curve.append(chamfer(x, target, variant))
    return x, np.array(curve)


def fibonacci_sphere(n, radius=0.5):
    """``n`` near-uniform points on a sphere; the bundled fit-demo target."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5.0**0.5) * i
    return radius * np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
