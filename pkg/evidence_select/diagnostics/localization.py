"""Overlap of selected evidence with planted evidence."""

from dataclasses import asdict, dataclass
from typing import Dict, Mapping, Sequence, Union

import numpy as np

from ..constants import UNAVAILABLE
from ..metrics import dice
from ..synthbag import Bag


@dataclass
class LocalizationResult:
    bags: int
    dice: float
    precision: float
    recall: float

    def to_dict(self) -> Dict:
        return asdict(self)


def localization(evidence: Mapping[str, Sequence[int]],
                 bags: Sequence[Bag]) -> Union[LocalizationResult, str]:
    """Mean Dice, precision and recall over bags that have planted evidence.

    Returns "unavailable" when no bag carries a planted set.
    """
    scores = []
    for bag in bags:
        if not bag.planted or bag.id not in evidence:
            continue
        selected, truth = set(evidence[bag.id]), set(bag.planted)
        hit = len(selected & truth)
        scores.append((
            dice(selected, truth),
            hit / len(selected) if selected else 0.0,
            hit / len(truth),
        ))
    if not scores:
        return UNAVAILABLE
    mean = np.mean(np.asarray(scores), axis=0)
    return LocalizationResult(bags=len(scores), dice=float(mean[0]),
                              precision=float(mean[1]), recall=float(mean[2]))
