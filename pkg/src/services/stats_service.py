"""
Work distributions, Jarzynski and Crooks estimators, free energies and
bootstrap uncertainties. Work is in quanta; beta converts via the quantum.
"""

import logging
import math
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from src.core.config import get_settings
from src.core.exceptions import EmptyOverlapError
from src.models.measurement import TransitionMatrix, WorkRecord
from src.models.statistics import CrooksFit, CrooksPoint, CrooksResult, Provenance, WorkDistribution, WorkMoments
from src.services.tpm_service import records_to_frame
from src.utils.units import beta_quanta

logger = logging.getLogger(__name__)

Records = Union[Sequence[WorkRecord], pd.DataFrame]
Statistic = Callable[[np.ndarray, np.ndarray], float]


def _merge_support(values: np.ndarray, weights: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Sum weights of values within tol of the first value of their cluster"""
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    support, totals = [], []
    for value, weight in zip(values, weights):
        if support and value - support[-1] <= tol:
            totals[-1] += weight
        else:
            support.append(value)
            totals.append(weight)
    return np.array(support, dtype=float), np.array(totals, dtype=float)


def work_distribution(
    thermal: np.ndarray,
    transitions: TransitionMatrix,
    initial_spectrum: np.ndarray,
    final_spectrum: np.ndarray,
    merge_tolerance: Optional[float] = None,
) -> WorkDistribution:
    """P(W) = sum_nm p_n P[n, m] delta(W - (eps_f^m - eps_i^n))"""
    tol = merge_tolerance or get_settings().merge_tolerance
    thermal = np.asarray(thermal, dtype=float)
    entries = transitions.entries
    if entries.shape != (thermal.size, len(final_spectrum)) or thermal.size != len(initial_spectrum):
        raise ValueError(
            f"Inconsistent dimensions: thermal {thermal.size}, transitions {entries.shape}, "
            f"spectra {len(initial_spectrum)}/{len(final_spectrum)}"
        )
    joint = thermal[:, None] * entries
    work = np.asarray(final_spectrum, dtype=float)[None, :] - np.asarray(initial_spectrum, dtype=float)[:, None]
    mask = joint > 0
    support, probabilities = _merge_support(work[mask], joint[mask], tol)
    probabilities = probabilities / probabilities.sum()
    return WorkDistribution(support=support, probabilities=probabilities, provenance=Provenance.EXACT)


def sampled_distribution(records: Records, merge_tolerance: Optional[float] = None) -> WorkDistribution:
    """Empirical distribution of sampled work records, with counts"""
    tol = merge_tolerance or get_settings().merge_tolerance
    frame = _as_frame(records)
    shots = len(frame)
    if shots == 0:
        return WorkDistribution(support=[], probabilities=[], provenance=Provenance.SAMPLED, shots=0, counts=np.array([]))
    support, counts = _merge_support(frame["work"].to_numpy(), np.ones(shots), tol)
    _, weights = _merge_support(frame["work"].to_numpy(), frame["weight"].to_numpy(), tol)
    return WorkDistribution(
        support=support,
        probabilities=weights / weights.sum(),
        provenance=Provenance.SAMPLED,
        shots=shots,
        counts=counts.astype(np.int64),
    )


def jarzynski_average(dist: WorkDistribution, temperature: float, quantum: float) -> float:
    """<exp(-beta W)> over the distribution"""
    beta = beta_quanta(temperature, quantum)
    return float(np.dot(dist.probabilities, np.exp(-beta * dist.support)))


def free_energy_difference(
    initial_spectrum: np.ndarray, final_spectrum: np.ndarray, temperature: float, quantum: float
) -> float:
    """dF = -ln(Z_f / Z_i) / beta, in quanta"""
    beta = beta_quanta(temperature, quantum)
    log_ratio = logsumexp(-beta * np.asarray(final_spectrum)) - logsumexp(-beta * np.asarray(initial_spectrum))
    return float(-log_ratio / beta)


def partition_ratio(initial_spectrum: np.ndarray, final_spectrum: np.ndarray, temperature: float, quantum: float) -> float:
    """Z_f / Z_i"""
    beta = beta_quanta(temperature, quantum)
    return math.exp(logsumexp(-beta * np.asarray(final_spectrum)) - logsumexp(-beta * np.asarray(initial_spectrum)))


def jarzynski_free_energy(dist: WorkDistribution, temperature: float, quantum: float) -> float:
    """Direct exponential-average estimate of dF, in quanta"""
    beta = beta_quanta(temperature, quantum)
    return float(-math.log(jarzynski_average(dist, temperature, quantum)) / beta)


def work_moments(dist: WorkDistribution, delta_f: float = 0.0) -> WorkMoments:
    mean = float(np.dot(dist.probabilities, dist.support))
    variance = max(float(np.dot(dist.probabilities, (dist.support - mean) ** 2)), 0.0)
    return WorkMoments(mean=mean, variance=variance, std=math.sqrt(variance), dissipated_mean=mean - delta_f)


def crooks_check(
    forward: WorkDistribution,
    backward: WorkDistribution,
    temperature: float,
    quantum: float,
    delta_f: float = 0.0,
    floor: Optional[float] = None,
    min_counts: Optional[int] = None,
) -> CrooksResult:
    """
    Points (W, ln(P_F(W)/P_B(-W)), beta (W - dF)) on the shared support.

    Exact distributions keep points whose probabilities both exceed `floor`;
    sampled ones keep points with at least `min_counts` counts on both sides.
    """
    settings = get_settings()
    sampled = forward.provenance == Provenance.SAMPLED and backward.provenance == Provenance.SAMPLED
    floor = settings.crooks_floor_exact if floor is None else floor
    min_counts = settings.crooks_min_counts if min_counts is None else min_counts
    tol = settings.merge_tolerance
    beta = beta_quanta(temperature, quantum)

    points, excluded = [], []
    for work, p_forward in zip(forward.support, forward.probabilities):
        p_backward = backward.probability_at(-work, tol)
        if sampled:
            c_forward, c_backward = forward.count_at(work, tol), backward.count_at(-work, tol)
            keep = c_forward >= min_counts and c_backward >= min_counts
        else:
            c_forward = c_backward = None
            keep = p_forward > floor and p_backward > floor
        if not keep:
            excluded.append(float(work))
            continue
        points.append(
            CrooksPoint(
                work=float(work),
                lhs=math.log(p_forward / p_backward),
                rhs=beta * (work - delta_f),
                forward_count=c_forward,
                backward_count=c_backward,
            )
        )
    if not points:
        raise EmptyOverlapError(f"No work value clears the Crooks floor ({len(excluded)} excluded)")
    logger.debug(f"Crooks check: {len(points)} points, {len(excluded)} excluded")
    return CrooksResult(points=points, excluded=excluded, floor=float(min_counts if sampled else floor))


def crooks_slope(result: CrooksResult, temperature: float, quantum: float) -> CrooksFit:
    """
    Weighted linear fit of ln(P_F/P_B) against beta W. Sampled points are
    weighted by their inverse variance 1/c_F + 1/c_B.
    """
    if len(result.points) < 2:
        raise EmptyOverlapError(f"Need two Crooks points for a slope, got {len(result.points)}")
    beta = beta_quanta(temperature, quantum)
    x = np.array([beta * p.work for p in result.points])
    y = np.array([p.lhs for p in result.points])
    if all(p.forward_count for p in result.points):
        variance = np.array([1.0 / p.forward_count + 1.0 / p.backward_count for p in result.points])
        weights = 1.0 / np.sqrt(variance)
    else:
        weights = np.ones_like(x)
    slope, intercept = np.polyfit(x, y, 1, w=weights)
    return CrooksFit(slope=float(slope), intercept=float(intercept), points=len(result.points))


def _as_frame(records: Records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    return records_to_frame(records)


def exponential_average_statistic(temperature: float, quantum: float) -> Statistic:
    """Weighted <exp(-beta W)> as a bootstrap statistic"""
    beta = beta_quanta(temperature, quantum)

    def statistic(work: np.ndarray, weights: np.ndarray) -> float:
        return float(np.dot(weights, np.exp(-beta * work)) / weights.sum())

    return statistic


def mean_work_statistic(work: np.ndarray, weights: np.ndarray) -> float:
    return float(np.dot(weights, work) / weights.sum())


def bootstrap_error(
    records: Records,
    statistic: Statistic,
    resamples: Optional[int] = None,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Nonparametric bootstrap of statistic(work, weights) over records.

    Records with equal (work, weight) are interchangeable, so each resample
    is drawn as multinomial counts over the distinct rows.
    """
    resamples = resamples or get_settings().bootstrap_resamples
    if resamples < 100:
        raise ValueError(f"Bootstrap needs >= 100 resamples, got {resamples}")
    frame = _as_frame(records)
    if len(frame) == 0:
        raise ValueError("Cannot bootstrap an empty record set")
    grouped = frame.groupby(["work", "weight"], sort=True).size().reset_index(name="multiplicity")
    work = grouped["work"].to_numpy()
    weights = grouped["weight"].to_numpy()
    multiplicity = grouped["multiplicity"].to_numpy()
    total = int(multiplicity.sum())

    estimate = statistic(work, weights * multiplicity)
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(total, multiplicity / total, size=resamples)
    values = np.array([statistic(work, weights * counts) for counts in draws])
    return float(estimate), float(values.std(ddof=1))
