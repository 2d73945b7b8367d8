"""
Scenario runner: builds every protocol of a scenario, runs the exact and
Monte-Carlo pipelines and collects estimators and acceptance checks
"""

import asyncio
import itertools
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src.core.exceptions import ConfigError, EmptyOverlapError, IonworkError
from src.models.evolution import DephasingSpec
from src.models.measurement import ThermalSpec
from src.models.quantum import FockSpace
from src.models.scenario import (
    Experiment,
    ProtocolPoint,
    ProtocolResult,
    ScenarioBundle,
    ScenarioConfig,
)
from src.models.statistics import WorkDistribution
from src.services.evolution_service import calibrate_drive_amplitude, drag_displacement_alpha
from src.services.hamiltonian_service import build_dragged, build_driven_tls, driven_tls_reversed
from src.services.stats_service import (
    bootstrap_error,
    crooks_check,
    crooks_slope,
    exponential_average_statistic,
    free_energy_difference,
    jarzynski_average,
    partition_ratio,
    sampled_distribution,
    work_distribution,
    work_moments,
)
from src.services.tpm_service import (
    boltzmann_distribution,
    dragged_transition_matrix,
    records_to_frame,
    run_tpm_montecarlo,
    thermal_distribution,
    tls_thermal_spec,
    transition_matrix,
)
from src.utils.units import beta_quanta, khz_to_angular, khz_to_rate, nbar_to_temperature, us_to_seconds

logger = logging.getLogger(__name__)

JARZYNSKI_TOL = 1e-6
CROOKS_TOL = 1e-6
CROSS_CHECK_TOL = 1e-6
# Initial levels with at least this thermal weight enter the cross-check
CROSS_CHECK_MIN_WEIGHT = 1e-3
CROOKS_SLOPE_TOL = 0.05
SAMPLED_SIGMAS = 3.0

# Spawn-key entry of the per-protocol seeds
PROTOCOL_STREAM = 2

SWEEP_FIELDS = ("tau_us", "gamma_khz", "target_alpha")


def load_scenario(path: str) -> ScenarioConfig:
    """Parse a JSON scenario file, reporting the offending field and line"""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read scenario file {path}: {e}")
    return parse_scenario(text)


def parse_scenario(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON: {e.msg} (column {e.colno})", line=e.lineno)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        location = [str(part) for part in error["loc"]]
        raise ConfigError(error["msg"], field=".".join(location) or None, line=_locate_line(text, error["loc"]))


def dump_scenario(config: ScenarioConfig) -> str:
    return config.model_dump_json(indent=2)


def _locate_line(text: str, location: Sequence[Any]) -> Optional[int]:
    """Line of the last named key along a validation error path"""
    position, found = 0, None
    for part in location:
        if not isinstance(part, str):
            continue
        index = text.find(f'"{part}"', position)
        if index < 0:
            break
        position, found = index, index
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def protocol_seed(seed: int, index: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(PROTOCOL_STREAM, index)).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _check(value: float, target: float, tolerance: float) -> Dict[str, Any]:
    deviation = abs(value - target)
    return {
        "value": float(value),
        "target": float(target),
        "tolerance": float(tolerance),
        "passed": bool(deviation <= tolerance),
    }


def _flag(passed: bool, **details: Any) -> Dict[str, Any]:
    return {"passed": bool(passed), **details}


class ScenarioService:
    """Runs the protocols of one scenario, at most `jobs` at a time"""

    def __init__(self, config: ScenarioConfig, jobs: int = 1):
        self.config = config
        self.jobs = max(1, jobs)

    def protocol_points(self) -> List[ProtocolPoint]:
        config = self.config
        points: List[ProtocolPoint] = []
        if config.experiment == Experiment.DRAGGED_OSCILLATOR:
            params = config.oscillator
            alphas = params.target_alpha or [None]
            for tau, alpha in itertools.product(params.tau_us, alphas):
                label = f"tau{tau:g}us" + (f"_alpha{alpha:g}" if alpha is not None else "")
                points.append(ProtocolPoint(index=len(points), label=label, tau_us=tau, target_alpha=alpha))
        else:
            for protocol in config.tls.protocols:
                label = f"tau{protocol.tau_us:g}us_gamma{protocol.gamma_khz:g}khz"
                points.append(
                    ProtocolPoint(index=len(points), label=label, tau_us=protocol.tau_us, gamma_khz=protocol.gamma_khz)
                )
        return points

    async def run(self) -> ScenarioBundle:
        points = self.protocol_points()
        logger.info(f"Running {self.config.experiment.value}: {len(points)} protocols, {self.jobs} worker(s)")
        semaphore = asyncio.Semaphore(self.jobs)

        async def run_single(point: ProtocolPoint) -> ProtocolResult:
            async with semaphore:
                return await asyncio.to_thread(self.run_protocol, point)

        results = await asyncio.gather(*(run_single(point) for point in points))
        bundle = ScenarioBundle(config=self.config, protocols=list(results))
        bundle.checks.update(self._scenario_checks(bundle.protocols))
        if not bundle.protocols:
            bundle.errors.append("scenario produced no protocols")
        logger.info(f"Scenario finished: {'all checks passed' if bundle.passed else 'some checks failed'}")
        return bundle

    def run_protocol(self, point: ProtocolPoint) -> ProtocolResult:
        try:
            if self.config.experiment == Experiment.DRAGGED_OSCILLATOR:
                result = self._run_oscillator(point)
            else:
                result = self._run_tls(point)
        except IonworkError as e:
            logger.error(f"Protocol {point.label} failed: {e}")
            raise
        logger.info(f"Protocol {point.label} done")
        return result

    # Dragged oscillator

    def _run_oscillator(self, point: ProtocolPoint) -> ProtocolResult:
        params = self.config.oscillator
        numerics = self.config.numerics
        if params.nbar <= 0:
            raise ConfigError("nbar must be > 0 for a finite temperature", field="oscillator.nbar")
        nu = khz_to_angular(params.nu_khz)
        tau = us_to_seconds(point.tau_us)
        ramp_down = us_to_seconds(params.ramp_down_us)
        if point.target_alpha is not None:
            amplitude = calibrate_drive_amplitude(point.target_alpha, nu, tau, ramp_down)
        else:
            amplitude = khz_to_angular(params.drive_amplitude_khz)
        space = FockSpace(cutoff=numerics.cutoff)
        hamiltonian = build_dragged(nu, amplitude, tau, ramp_down, space)
        alpha = drag_displacement_alpha(amplitude, nu, tau, ramp_down)

        transitions = dragged_transition_matrix(alpha, space)
        thermal = thermal_distribution(ThermalSpec(nbar=params.nbar, quantum=nu), space.cutoff)
        temperature = nbar_to_temperature(params.nbar, nu)

        checks: Dict[str, Dict[str, Any]] = {}
        if numerics.cross_check:
            numeric = transition_matrix(hamiltonian, tol=numerics.integrator_tol)
            rows = np.flatnonzero(thermal >= CROSS_CHECK_MIN_WEIGHT)
            l1 = float(np.abs(numeric.entries[rows] - transitions.entries[rows]).sum(axis=1).max())
            checks["analytic_vs_numeric_l1"] = {**_check(l1, 0.0, CROSS_CHECK_TOL), "rows": rows.tolist()}

        result = self._estimate(point, hamiltonian, nu, temperature, thermal, transitions, 0.0, checks)
        result.report["drive_amplitude"] = float(amplitude)
        result.report["alpha"] = {"real": alpha.real, "imag": alpha.imag, "abs": abs(alpha)}
        return result

    # Driven two-level system

    def _run_tls(self, point: ProtocolPoint) -> ProtocolResult:
        params = self.config.tls
        rabi_0 = khz_to_angular(params.rabi_khz)
        tau = us_to_seconds(point.tau_us)
        gamma = khz_to_rate(point.gamma_khz)
        temperature = params.t_eff_uk * 1e-6
        dephasing = DephasingSpec(gamma=gamma)

        hamiltonian = build_driven_tls(rabi_0, tau)
        thermal = thermal_distribution(tls_thermal_spec(temperature, rabi_0), 2)
        transitions = transition_matrix(hamiltonian, dephasing, tol=self.config.numerics.integrator_tol)
        result = self._estimate(point, hamiltonian, rabi_0, temperature, thermal, transitions, gamma, {})

        backward_hamiltonian = driven_tls_reversed(rabi_0, tau)
        backward_spectrum = backward_hamiltonian.initial_spectrum()
        backward_thermal = boltzmann_distribution(backward_spectrum, beta_quanta(temperature, rabi_0))
        backward_transitions = transition_matrix(
            backward_hamiltonian, dephasing, tol=self.config.numerics.integrator_tol
        )
        backward = work_distribution(
            backward_thermal, backward_transitions, backward_spectrum, backward_hamiltonian.final_spectrum()
        )
        delta_f = result.report["delta_f"]
        result.report["crooks_exact"] = self._crooks_report(result.exact, backward, temperature, rabi_0, delta_f)
        if result.report["crooks_exact"]["points"]:
            result.checks["crooks_exact"] = _check(result.report["crooks_exact"]["max_deviation"], 0.0, CROOKS_TOL)
        result.report["off_diagonal_mass"] = transitions.off_diagonal_mass(thermal)
        return result

    # Shared estimators

    def _estimate(
        self,
        point: ProtocolPoint,
        hamiltonian,
        quantum: float,
        temperature: float,
        thermal: np.ndarray,
        transitions,
        gamma: float,
        checks: Dict[str, Dict[str, Any]],
    ) -> ProtocolResult:
        sampling = self.config.sampling
        initial_spectrum = hamiltonian.initial_spectrum()
        final_spectrum = hamiltonian.final_spectrum()
        exact = work_distribution(thermal, transitions, initial_spectrum, final_spectrum)
        delta_f = free_energy_difference(initial_spectrum, final_spectrum, temperature, quantum)
        target = partition_ratio(initial_spectrum, final_spectrum, temperature, quantum)
        jarzynski = jarzynski_average(exact, temperature, quantum)
        moments = work_moments(exact, delta_f)

        checks["doubly_stochastic"] = _flag(transitions.is_doubly_stochastic())
        checks["jarzynski_exact"] = _check(jarzynski, target, JARZYNSKI_TOL)
        checks["second_law"] = _flag(moments.mean >= delta_f - 1e-9, mean=moments.mean, delta_f=delta_f)

        report: Dict[str, Any] = {
            "label": point.label,
            "tau_us": point.tau_us,
            "gamma_khz": point.gamma_khz,
            "quantum_rad_s": quantum,
            "temperature_k": temperature,
            "beta_quanta": beta_quanta(temperature, quantum),
            "delta_f": delta_f,
            "partition_ratio": target,
            "jarzynski_exact": jarzynski,
            "moments_exact": moments.model_dump(),
            "negative_dissipated_probability": float(exact.probabilities[exact.support < delta_f - 1e-9].sum()),
        }
        if hamiltonian.dimension > 2:
            report["crooks_exact"] = self._crooks_report(exact, exact, temperature, quantum, delta_f)
            if report["crooks_exact"]["points"]:
                checks["crooks_exact"] = _check(report["crooks_exact"]["max_deviation"], 0.0, CROOKS_TOL)

        sampled, frame = None, None
        if sampling.shots > 0:
            seed = protocol_seed(sampling.seed, point.index)
            records = run_tpm_montecarlo(
                hamiltonian,
                thermal,
                sampling.shots,
                seed,
                transitions=transitions,
                gamma=gamma,
                trajectory_steps=self.config.numerics.trajectory_steps,
            )
            frame = records_to_frame(records)
            sampled = sampled_distribution(frame)
            estimate, stderr = bootstrap_error(
                frame, exponential_average_statistic(temperature, quantum), sampling.bootstrap_resamples, seed
            )
            report["jarzynski_sampled"] = {"estimate": estimate, "stderr": stderr, "shots": sampling.shots}
            report["moments_sampled"] = work_moments(sampled, delta_f).model_dump()
            report["negative_dissipated_records"] = int((frame["work"] < delta_f - 1e-9).sum())
            checks["jarzynski_sampled"] = _check(estimate, target, max(SAMPLED_SIGMAS * stderr, 1e-12))
            if hamiltonian.dimension > 2:
                report["crooks_sampled"] = self._sampled_crooks(
                    hamiltonian, thermal, transitions, sampled, temperature, quantum, delta_f, seed
                )

        return ProtocolResult(
            point=point,
            quantum=quantum,
            temperature=temperature,
            initial_spectrum=initial_spectrum.tolist(),
            final_spectrum=final_spectrum.tolist(),
            transitions=transitions,
            exact=exact,
            sampled=sampled,
            records=frame,
            report=report,
            checks=checks,
        )

    def _crooks_report(
        self, forward: WorkDistribution, backward: WorkDistribution, temperature: float, quantum: float, delta_f: float
    ) -> Dict[str, Any]:
        try:
            result = crooks_check(forward, backward, temperature, quantum, delta_f)
        except EmptyOverlapError as e:
            logger.warning(f"Crooks check skipped: {e}")
            return {"points": [], "excluded": [], "max_deviation": None}
        return {
            "points": [p.model_dump(exclude_none=True) for p in result.points],
            "excluded": result.excluded,
            "max_deviation": result.max_deviation,
        }

    def _sampled_crooks(
        self, hamiltonian, thermal, transitions, forward, temperature, quantum, delta_f, seed
    ) -> Dict[str, Any]:
        """
        The dragged protocol is its own time reverse, so the backward sample is
        an independent run of the same protocol.
        """
        backward_records = run_tpm_montecarlo(
            hamiltonian, thermal, self.config.sampling.shots, seed + 1, transitions=transitions
        )
        backward = sampled_distribution(backward_records)
        try:
            result = crooks_check(forward, backward, temperature, quantum, delta_f)
            fit = crooks_slope(result, temperature, quantum)
        except EmptyOverlapError as e:
            logger.warning(f"Sampled Crooks fit skipped: {e}")
            return {"points": [], "slope": None}
        return {"points": [p.model_dump(exclude_none=True) for p in result.points], "slope": fit.slope}

    # Scenario-level checks

    def _scenario_checks(self, protocols: List[ProtocolResult]) -> Dict[str, Dict[str, Any]]:
        checks: Dict[str, Dict[str, Any]] = {}
        if self.config.experiment == Experiment.DRIVEN_TLS:
            by_key = {(p.point.tau_us, p.point.gamma_khz): p for p in protocols}
            speed = [by_key.get((tau, 0.0)) for tau in (50.0, 10.0, 5.0)]
            if all(speed):
                variances = [p.report["moments_exact"]["variance"] for p in speed]
                checks["variance_increases_with_speed"] = _flag(
                    variances[0] < variances[1] < variances[2], variances=variances
                )
                slowest = speed[0].transitions
                uniform = np.full(slowest.dimension, 1.0 / slowest.dimension)
                checks["near_adiabatic_off_diagonal"] = _check(slowest.off_diagonal_mass(uniform), 0.0, 0.05)
            zeno = [by_key.get((5.0, gamma)) for gamma in (0.0, 448.0, 1340.0)]
            if all(zeno):
                variances = [p.report["moments_exact"]["variance"] for p in zeno]
                checks["variance_decreases_with_dephasing"] = _flag(
                    variances[0] > variances[1] > variances[2], variances=variances
                )
        else:
            fast = [p for p in protocols if p.point.tau_us == min(q.point.tau_us for q in protocols)]
            for p in fast:
                probability = p.report["negative_dissipated_probability"]
                # None on exact-only runs: the sampled half is not evaluated
                records = p.report.get("negative_dissipated_records")
                checks[f"negative_dissipated_work_{p.point.label}"] = _flag(
                    probability > 1e-3 and (records is None or records > 0),
                    probability=probability,
                    records=records,
                    records_evaluated=records is not None,
                )
                if "crooks_sampled" in p.report:
                    slope = p.report["crooks_sampled"]["slope"]
                    if slope is None:
                        checks[f"crooks_sampled_slope_{p.point.label}"] = _flag(False, value=None, target=1.0)
                    else:
                        checks[f"crooks_sampled_slope_{p.point.label}"] = _check(slope, 1.0, CROOKS_SLOPE_TOL)
        return checks


def sweep_configs(base: ScenarioConfig, grid: Dict[str, List[float]]) -> List[Tuple[str, ScenarioConfig]]:
    """One single-protocol config per point of the Cartesian grid"""
    unknown = set(grid) - set(SWEEP_FIELDS)
    if unknown:
        raise ConfigError(f"Unknown sweep fields {sorted(unknown)}; choose from {list(SWEEP_FIELDS)}", field="grid")
    names = sorted(grid)
    configs = []
    for values in itertools.product(*(grid[name] for name in names)):
        assignment = dict(zip(names, values))
        label = "_".join(f"{name}={value:g}" for name, value in assignment.items())
        data = base.model_dump(mode="json")
        if base.experiment == Experiment.DRAGGED_OSCILLATOR:
            if "gamma_khz" in assignment:
                raise ConfigError("gamma_khz cannot be swept for the dragged oscillator", field="grid")
            if "tau_us" in assignment:
                data["oscillator"]["tau_us"] = [assignment["tau_us"]]
            if "target_alpha" in assignment:
                data["oscillator"]["target_alpha"] = [assignment["target_alpha"]]
        else:
            if "target_alpha" in assignment:
                raise ConfigError("target_alpha cannot be swept for the driven TLS", field="grid")
            first = base.tls.protocols[0]
            data["tls"]["protocols"] = [
                {
                    "tau_us": assignment.get("tau_us", first.tau_us),
                    "gamma_khz": assignment.get("gamma_khz", first.gamma_khz),
                }
            ]
        try:
            configs.append((label, ScenarioConfig.model_validate(data)))
        except ValidationError as e:
            raise ConfigError(e.errors()[0]["msg"], field="grid")
    return configs
