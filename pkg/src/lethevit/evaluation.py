"""Unlearning metric suite: forget/retain/test accuracy, a
loss-threshold membership inference attack, and the average gap to the
retrained reference model.

The attack is deliberately simple and fully deterministic: per-sample
cross-entropy losses are computed for the retain set (members) and the
test set (non-members), a single threshold maximizing balanced
member/non-member accuracy is fitted on those two sets, and the attack
score is the fraction of forget samples whose loss falls below it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import LabeledDataset
from .errors import ContractError
from .masking import MaskSpec, MaskType, build_masked_view
from .tensor import per_sample_cross_entropy, stop_recording
from .vit import ViTParams, forward

_EVAL_BATCH = 256


@dataclass
class MetricsReport:
    """FA / RA / TA / MIA percentages for one model."""

    fa: float
    ra: float
    ta: float
    mia: float
    method: str = ""
    seed: int = 0

    def __post_init__(self):
        for name in ("fa", "ra", "ta", "mia"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ContractError(f"{name} = {value} outside [0, 100]")


@dataclass
class GapReport:
    """Absolute per-metric gaps to a Retrain report and their mean."""

    d_fa: float
    d_ra: float
    d_ta: float
    d_mia: float
    ag: float


def batched_logits(params: ViTParams, images: np.ndarray) -> np.ndarray:
    """Forward in evaluation mode (no gradient recording), chunked."""
    outputs = []
    with stop_recording():
        for start in range(0, len(images), _EVAL_BATCH):
            outputs.append(forward(params, images[start:start + _EVAL_BATCH]).logits.values)
    return np.concatenate(outputs, axis=0)


def accuracy(params: ViTParams, dataset: LabeledDataset) -> float:
    """Top-1 accuracy as a percentage; argmax ties pick the lowest class."""
    if len(dataset) == 0:
        raise ContractError("accuracy of an empty dataset is undefined")
    logits = batched_logits(params, dataset.images)
    predictions = np.argmax(logits, axis=1)  # ties resolve to the lowest index
    return 100.0 * float((predictions == dataset.labels).mean())


def per_sample_losses(params: ViTParams, dataset: LabeledDataset) -> np.ndarray:
    logits = batched_logits(params, dataset.images)
    return per_sample_cross_entropy(logits, dataset.labels)


def fit_loss_threshold(member_losses: np.ndarray, nonmember_losses: np.ndarray) -> float:
    """Threshold maximizing balanced accuracy of `loss < t` => member.

    Candidates are the midpoints of adjacent distinct loss values plus
    -inf ("nobody is a member") and +inf ("everybody is"); the smallest
    maximizer wins. When all losses coincide the threshold sits at that
    single value.
    """
    member_losses = np.asarray(member_losses, dtype=np.float64)
    nonmember_losses = np.asarray(nonmember_losses, dtype=np.float64)
    if len(member_losses) == 0 or len(nonmember_losses) == 0:
        raise ContractError("threshold fit requires nonempty member and non-member sets")
    values = np.unique(np.concatenate([member_losses, nonmember_losses]))
    if len(values) == 1:
        candidates = values
    else:
        midpoints = (values[:-1] + values[1:]) / 2.0
        candidates = np.concatenate([[-np.inf], midpoints, [np.inf]])

    best_t = candidates[0]
    best_acc = -1.0
    for t in candidates:
        tpr = float((member_losses < t).mean())
        tnr = float((nonmember_losses >= t).mean())
        balanced = 0.5 * (tpr + tnr)
        if balanced > best_acc:
            best_acc = balanced
            best_t = float(t)
    return best_t


def mia_from_losses(
    forget_losses: np.ndarray,
    member_losses: np.ndarray,
    nonmember_losses: np.ndarray,
) -> float:
    """Attack success as the percentage of forget losses below the
    threshold fitted on member vs non-member losses."""
    forget_losses = np.asarray(forget_losses, dtype=np.float64)
    if len(forget_losses) == 0:
        raise ContractError("MIA requires a nonempty forget set")
    threshold = fit_loss_threshold(member_losses, nonmember_losses)
    return 100.0 * float((forget_losses < threshold).mean())


def mia_success_rate(
    params: ViTParams,
    forget: LabeledDataset,
    retain: LabeledDataset,
    test: LabeledDataset,
) -> float:
    """Loss-threshold attack: members = retain set, non-members = test set."""
    return mia_from_losses(
        per_sample_losses(params, forget),
        per_sample_losses(params, retain),
        per_sample_losses(params, test),
    )


def evaluate_model(params: ViTParams, split, method: str = "", seed: int = 0) -> MetricsReport:
    """Full FA / RA / TA / MIA report for one model on one split."""
    forget = split.forget_set()
    retain = split.retain_set()
    return MetricsReport(
        fa=accuracy(params, forget),
        ra=accuracy(params, retain),
        ta=accuracy(params, split.test),
        mia=mia_success_rate(params, forget, retain, split.test),
        method=method,
        seed=seed,
    )


def average_gap(method: MetricsReport, retrain: MetricsReport) -> GapReport:
    """Mean absolute per-metric difference to the retrained reference."""
    d_fa = abs(method.fa - retrain.fa)
    d_ra = abs(method.ra - retrain.ra)
    d_ta = abs(method.ta - retrain.ta)
    d_mia = abs(method.mia - retrain.mia)
    return GapReport(d_fa, d_ra, d_ta, d_mia, (d_fa + d_ra + d_ta + d_mia) / 4.0)


@dataclass
class SweepRow:
    ratio: float
    mask_type: str
    ta: float
    mia: float


def masking_sweep(
    params: ViTParams,
    forget: LabeledDataset,
    retain: LabeledDataset,
    test: LabeledDataset,
    ratios: Sequence[float],
    types: Sequence[MaskType],
    gaussian_std: float = 1.0,
    seed: int = 0,
) -> list[SweepRow]:
    """Test accuracy and MIA under each (masking ratio, mask type).

    `params` plays the attention-source role, normally the retrained
    model. The test set is masked for TA, the forget set is masked for
    the attack's input losses; the attack threshold itself is fitted on
    the unmasked retain and test sets.
    """
    member_losses = per_sample_losses(params, retain)
    nonmember_losses = per_sample_losses(params, test)
    rows = []
    for ratio in ratios:
        for mask_type in types:
            spec = MaskSpec(ratio=ratio, mask_type=mask_type, gaussian_std=gaussian_std)
            masked_test = build_masked_view(params, test.images, spec, seed=seed)
            ta = accuracy(
                params, LabeledDataset(masked_test.images, test.labels, test.class_count)
            )
            masked_forget = build_masked_view(params, forget.images, spec, seed=seed)
            forget_losses = per_sample_losses(
                params, LabeledDataset(masked_forget.images, forget.labels, forget.class_count)
            )
            mia = mia_from_losses(forget_losses, member_losses, nonmember_losses)
            rows.append(SweepRow(ratio=ratio, mask_type=mask_type.value, ta=ta, mia=mia))
    return rows
