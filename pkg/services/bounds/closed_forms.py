# services/bounds/closed_forms.py

from fractions import Fraction
from typing import List, Tuple

from services.bounds.bound_types import ClosedForms
from services.errors import ComputationError, DimensionError
from services.weyl.parabolic import entropy
from services.weyl.weyl_types import DiagonalFlow, Orientation, ParabolicSubgroup


def full_entropy(flow: DiagonalFlow) -> Fraction:
    """h(G, a) = sum_{i<j} |alpha_i - alpha_j|."""
    return entropy(flow, ParabolicSubgroup.G(flow.d), Orientation.trivial(flow))


def closed_form_hinf(flow: DiagonalFlow) -> Fraction:
    return full_entropy(flow) - flow.positive_part


def closed_form_hinf_Pk(flow: DiagonalFlow, k: int) -> Tuple[Fraction, int]:
    """
    Value for the maximal parabolic P_k and the index m_k used.

    alpha is sorted non-increasing first; k > d/2 is replaced by d - k.
    Candidates m whose defining sums would reach past index d are rejected.
    """
    d = flow.d
    if not 1 <= k <= d - 1:
        raise DimensionError(f"k={k} outside 1..{d - 1}")
    if 2 * k > d:
        k = d - k
    a: List[Fraction] = [Fraction(0)] + sorted(flow.alpha, reverse=True)  # 1-based

    m_k = None
    for m in range(1, d + 1):
        if m + 2 * (k - 1) + 1 > d:
            break
        upper = sum((a[m + 2 * (i - 1)] for i in range(1, k + 1)), Fraction(0))
        lower = sum((a[m + 2 * (i - 1) + 1] for i in range(1, k + 1)), Fraction(0))
        if upper >= 0 >= lower:
            m_k = m
            break
    if m_k is None:
        raise ComputationError(f"no admissible m_k for k={k} and alpha={[str(x) for x in flow.alpha]}")

    value = full_entropy(flow) - k * sum(a[1:m_k + 1], Fraction(0))
    value -= sum(((k - i) * (a[m_k + 2 * i - 1] + a[m_k + 2 * i]) for i in range(1, k)), Fraction(0))
    return value, m_k


def closed_form_B_bound(flow: DiagonalFlow) -> Tuple[Fraction, bool]:
    """Half of h(G,a), and whether the multiplicity hypotheses for sharpness hold."""
    distinct = set(flow.alpha)
    sharp = len(distinct) == flow.d or len(distinct) == 2
    return full_entropy(flow) / 2, sharp


def closed_forms(flow: DiagonalFlow) -> ClosedForms:
    values, ms = {}, {}
    for k in range(1, flow.d):
        values[k], ms[k] = closed_form_hinf_Pk(flow, k)
    b_value, sharp = closed_form_B_bound(flow)
    return ClosedForms(hinf=closed_form_hinf(flow), hinf_Pk=values, m_k=ms, b_bound=b_value, b_sharp=sharp)
