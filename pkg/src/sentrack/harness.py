"""Per-timestep simulation pipeline, Monte Carlo orchestration, and export.

Each step runs, per sensor node: prediction of its own prior and of every
posterior received at the previous step, action selection under the chosen
control method, action execution, detection simulation, measurement
update, cross-sensor label association, posterior flooding, update-mode
fusion, and estimate extraction with OSPA scoring.

Everything stochastic draws from one per-run generator in a fixed order
(plus per-(step, node) derived streams for the restart initializations of
the neighborhood-descent baseline), so a run is fully determined by its
seed.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import (
    ControlContext,
    PseudoCache,
    dcd_sc_select,
    isc_select,
    run_flooded_descent,
)
from .filtering import predict, update
from .fusion import associate_labels, compute_active_set, fuse_lmb
from .lmb import LmbDensity, eap_states, empty_density, prune, resample_component
from .metrics import ospa, ospa2
from .network import CommLog, build_topology
from .scenarios import ScenarioConfig
from .sensors import apply_action, detection_probability, relative_range_bearing

METHODS = ("fixed", "isc", "dcd", "fdcd")


@dataclass
class StepRecord:
    step: int
    card_truth: int
    card_est: float  # mean over nodes
    ospa: float
    ospa2: float
    bytes: int
    control_iterations: int
    commands: tuple
    truth: dict  # target index -> (x, y)
    fused_estimates: list  # (label, position) from the lowest-id node
    per_sensor_card: list


@dataclass
class RunResult:
    method: str
    run_index: int
    seed: int
    steps: list
    mean_ospa: float
    mean_ospa2: float
    control_seconds_per_sensor: float
    comm_entries: list


@dataclass
class MonteCarloResult:
    method: str
    scenario: str
    runs: list

    @property
    def mean_ospa(self) -> float:
        return float(np.mean([r.mean_ospa for r in self.runs]))

    @property
    def mean_ospa2(self) -> float:
        return float(np.mean([r.mean_ospa2 for r in self.runs]))

    @property
    def mean_control_seconds(self) -> float:
        return float(np.mean([r.control_seconds_per_sensor for r in self.runs]))

    def cardinality_trace(self) -> list:
        """Per step: (step, true count, mean estimated count over runs)."""
        out = []
        for i, rec in enumerate(self.runs[0].steps):
            est = float(np.mean([r.steps[i].card_est for r in self.runs]))
            out.append((rec.step, rec.card_truth, est))
        return out

    def mean_cardinality_error(self, after_step: int = 0) -> float:
        errs = [
            abs(rec.card_est - rec.card_truth)
            for r in self.runs
            for rec in r.steps
            if rec.step > after_step
        ]
        return float(np.mean(errs)) if errs else 0.0


def _zero_action_index(actions) -> int:
    for i, a in enumerate(actions):
        if a.is_zero:
            return i
    return 0


def _simulate_measurements(scenario, sensor_states, truth, rng):
    """Detections (sigmoid-gated, Gaussian displacement noise) plus clutter."""
    per_sensor = []
    for s, state in enumerate(sensor_states):
        fov = scenario.sensors[s].fov
        sigma = scenario.filter.meas_noise_std
        measurements = []
        for idx in sorted(truth):
            pos = truth[idx]
            rho, theta = relative_range_bearing(state, pos)
            if rng.random() < detection_probability(fov, rho, theta):
                z = np.array(pos) - state.position + rng.normal(0.0, sigma, 2)
                measurements.append(z)
        for _ in range(rng.poisson(scenario.clutter_mean)):
            r = fov.rho_max * math.sqrt(rng.random())
            ang = state.bearing + rng.uniform(-fov.theta_max, fov.theta_max)
            measurements.append(np.array([r * math.sin(ang), r * math.cos(ang)]))
        per_sensor.append(measurements)
    return per_sensor


def _select_commands(method, scenario, cache, topology, step, seed, dcd_runs, comm_log):
    """Dispatch one control step; returns (commands, descent iterations)."""
    n = len(scenario.sensors)
    zero = [_zero_action_index(scenario.sensors[s].actions) for s in range(n)]
    if method == "fixed":
        return list(zero), 0

    if method == "isc":
        commands = list(zero)
        positions = [cache.sensor_states[s].position for s in range(n)]
        for s in range(n):
            others = [positions[t] for t in range(n) if t != s]
            commands[s], _ = isc_select(s, cache, other_positions=others, zero_action=zero[s])
        return commands, 0

    if method == "dcd":
        commands = list(zero)
        for s in range(n):
            rng_s = np.random.default_rng([seed, step, s])
            commands[s] = dcd_sc_select(
                s,
                topology.neighbors(s),
                cache,
                runs=dcd_runs,
                rng=rng_s,
                zero_action=zero[s],
            )
        return commands, 0

    if method == "fdcd":
        commands = list(zero)
        iterations = 0
        for component in topology.connected_components():
            participants = tuple(sorted(component))
            ctx = ControlContext(cache, participants)
            initial = {}
            for s in participants:
                initial[s], _ = isc_select(s, cache, zero_action=zero[s])
                comm_log.record(
                    topology, step, s, len(cache.pseudo(s, initial[s]).components)
                )

            def on_turn(s, a):
                comm_log.record(topology, step, s, len(cache.pseudo(s, a).components))

            outcome = run_flooded_descent(
                participants,
                ctx.n_actions(),
                ctx.evaluate,
                initial,
                zero_action=0,
                on_turn=on_turn,
            )
            # final command flood-out from the sensor that met the stopping rule
            comm_log.record(topology, step, outcome.stopped_at_sensor, 0)
            for s, a in zip(participants, outcome.command):
                commands[s] = a
            iterations = max(iterations, outcome.iterations)
        return commands, iterations

    raise ValueError(f"unknown control method {method!r}")


def _fuse_and_estimate(scenario, posteriors, predicted, sensor_states):
    """Update-mode fusion and estimate extraction, once per network component."""
    by_label_post = {s: d.by_label() for s, d in posteriors.items()}
    by_label_pred = {s: d.by_label() for s, d in predicted.items()}

    def fuse_component(members):
        locals_ = {s: posteriors[s] for s in members}
        labels = sorted({l for s in members for l in by_label_post[s]})
        active = {}
        for label in labels:
            holders = [s for s in members if label in by_label_post[s]]
            sensors = {
                s: (sensor_states[s], scenario.sensors[s].fov) for s in holders
            }
            upd = {s: by_label_post[s][label].mean_position() for s in holders}
            pred = {
                s: by_label_pred[s][label].mean_position()
                for s in holders
                if label in by_label_pred[s]
            }
            active[label] = compute_active_set(label, sensors, upd, pred)
        fused = fuse_lmb(locals_, active, "update", scenario.filter.particle_count)
        reporting = prune(fused, scenario.fusion.estimate_floor, len(fused.components) or 1)
        return [(label, state) for label, state in eap_states(reporting)]

    return fuse_component


def run_single(
    scenario: ScenarioConfig,
    method: str,
    seed: int,
    run_index: int = 0,
    dcd_runs: int = 1,
    duration: int | None = None,
) -> RunResult:
    """One seeded run of the full pipeline under a control method."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    duration = duration or scenario.duration
    rng = np.random.default_rng(seed)
    n = len(scenario.sensors)
    sensor_states = [spec.initial_state() for spec in scenario.sensors]
    fovs = {s: scenario.sensors[s].fov for s in range(n)}
    action_sets = {s: list(scenario.sensors[s].actions) for s in range(n)}
    filter_cfgs = {s: scenario.filter_for(s) for s in range(n)}
    posteriors = {s: empty_density(0, "posterior") for s in range(n)}
    truth_tracks = scenario.truth_tracks(duration)
    est_tracks = [dict() for _ in range(n)]
    comm_log = CommLog()
    control_seconds = 0.0
    records = []

    for step in range(1, duration + 1):
        truth = scenario.truth_states(step)

        predicted = {
            s: predict(posteriors[s], scenario.motion, [], rng) for s in range(n)
        }

        positions = {s: (sensor_states[s].x, sensor_states[s].y) for s in range(n)}
        topology = build_topology(positions, scenario.comm_range)

        t0 = time.perf_counter()
        cache = PseudoCache(
            predicted,
            {s: sensor_states[s] for s in range(n)},
            fovs,
            action_sets,
            filter_cfgs,
            scenario.objective,
        )
        commands, iterations = _select_commands(
            method, scenario, cache, topology, step, seed, dcd_runs, comm_log
        )
        control_seconds += time.perf_counter() - t0

        sensor_states = [
            apply_action(sensor_states[s], action_sets[s][commands[s]]) for s in range(n)
        ]
        positions = {s: (sensor_states[s].x, sensor_states[s].y) for s in range(n)}
        topology = build_topology(positions, scenario.comm_range)

        measurements = _simulate_measurements(scenario, sensor_states, truth, rng)

        for s in range(n):
            posterior = update(
                predicted[s],
                measurements[s],
                sensor_states[s],
                fovs[s],
                filter_cfgs[s],
                rng,
                origin=s,
            )
            pred_components = predicted[s].by_label()
            resampled = []
            for c in posterior.components:
                # components passed through unchanged keep their particles
                if pred_components.get(c.label) is c:
                    resampled.append(c)
                else:
                    resampled.append(
                        resample_component(c, filter_cfgs[s].particle_count, rng)
                    )
            posterior = LmbDensity(tuple(resampled), posterior.timestamp, posterior.role)
            posteriors[s] = prune(
                posterior, filter_cfgs[s].existence_floor, filter_cfgs[s].max_components
            )

        posteriors = associate_labels(
            posteriors, scenario.fusion.merge_distance, current_step=step
        )

        for s in range(n):
            comm_log.record(topology, step, s, len(posteriors[s].components))

        fuse_component = _fuse_and_estimate(scenario, posteriors, predicted, sensor_states)
        truth_positions = [truth[i] for i in sorted(truth)]
        ospa_sum = 0.0
        ospa2_sum = 0.0
        card_sum = 0.0
        per_sensor_card = [0] * n
        first_estimates = None
        for component in topology.connected_components():
            estimates = fuse_component(sorted(component))
            est_positions = [state[:2] for _label, state in estimates]
            step_ospa = ospa(
                truth_positions,
                est_positions,
                scenario.metric.ospa_cutoff,
                scenario.metric.ospa_order,
            )
            for s in component:
                for label, state in estimates:
                    est_tracks[s].setdefault(label, {})[step] = tuple(state[:2])
                step_ospa2 = ospa2(
                    truth_tracks,
                    est_tracks[s],
                    scenario.metric.ospa_cutoff,
                    scenario.metric.ospa_order,
                    min(scenario.metric.ospa2_window, step),
                    step,
                )
                ospa_sum += step_ospa
                ospa2_sum += step_ospa2
                card_sum += len(estimates)
                per_sensor_card[s] = len(posteriors[s].components)
            if first_estimates is None or min(component) == 0:
                first_estimates = estimates

        records.append(
            StepRecord(
                step=step,
                card_truth=len(truth),
                card_est=card_sum / n,
                ospa=ospa_sum / n,
                ospa2=ospa2_sum / n,
                bytes=comm_log.bytes_in_step(step),
                control_iterations=iterations,
                commands=tuple(commands),
                truth=truth,
                fused_estimates=first_estimates or [],
                per_sensor_card=per_sensor_card,
            )
        )

    return RunResult(
        method=method,
        run_index=run_index,
        seed=seed,
        steps=records,
        mean_ospa=float(np.mean([r.ospa for r in records])),
        mean_ospa2=float(np.mean([r.ospa2 for r in records])),
        control_seconds_per_sensor=control_seconds / (n * duration),
        comm_entries=comm_log.entries,
    )


def monte_carlo(
    scenario: ScenarioConfig,
    method: str,
    runs: int,
    base_seed: int,
    dcd_runs: int = 1,
    duration: int | None = None,
) -> MonteCarloResult:
    """Independent seeded runs (seed = base_seed + i) with aggregate means."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    results = [
        run_single(scenario, method, base_seed + i, i, dcd_runs, duration)
        for i in range(runs)
    ]
    return MonteCarloResult(method=method, scenario=scenario.name, runs=results)


# ---------------------------------------------------------------------------
# CSV / JSON export
# ---------------------------------------------------------------------------


def export_results(results: list, out_dir) -> dict:
    """Write run-level, timestep-level, cardinality-trace and comm-log CSVs.

    Wall-clock timings go to a JSON sidecar so the CSV outputs stay
    byte-identical across repeated invocations with the same arguments.
    Returns the mapping of logical name -> written path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "runs": out / "runs.csv",
        "timesteps": out / "timesteps.csv",
        "cardinality": out / "cardinality_trace.csv",
        "comm": out / "comm_log.csv",
        "timings": out / "timings.json",
    }

    with open(paths["runs"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "run", "seed", "mean_ospa", "mean_ospa2"])
        for mc in results:
            for r in mc.runs:
                w.writerow([r.method, r.run_index, r.seed, repr(r.mean_ospa), repr(r.mean_ospa2)])

    with open(paths["timesteps"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "method",
                "run",
                "step",
                "card_truth",
                "card_est",
                "ospa",
                "ospa2",
                "bytes",
                "control_iterations",
            ]
        )
        for mc in results:
            for r in mc.runs:
                for rec in r.steps:
                    w.writerow(
                        [
                            r.method,
                            r.run_index,
                            rec.step,
                            rec.card_truth,
                            repr(rec.card_est),
                            repr(rec.ospa),
                            repr(rec.ospa2),
                            rec.bytes,
                            rec.control_iterations,
                        ]
                    )

    with open(paths["cardinality"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "step", "card_truth", "card_est_mean"])
        for mc in results:
            for step, truth, est in mc.cardinality_trace() if mc.runs else []:
                w.writerow([mc.method, step, truth, repr(est)])

    with open(paths["comm"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "run", "step", "origin", "sequence", "bytes", "rounds"])
        for mc in results:
            for r in mc.runs:
                for e in r.comm_entries:
                    w.writerow([r.method, r.run_index, e.step, e.origin, e.sequence, e.bytes, e.rounds])

    timings = {
        mc.method: {
            "control_seconds_per_sensor": [r.control_seconds_per_sensor for r in mc.runs],
            "mean_control_seconds_per_sensor": mc.mean_control_seconds if mc.runs else 0.0,
        }
        for mc in results
    }
    with open(paths["timings"], "w") as fh:
        json.dump(timings, fh, indent=2)
        fh.write("\n")

    return paths
