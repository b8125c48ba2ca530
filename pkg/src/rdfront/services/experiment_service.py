"""
Experiment runner: one configured experiment per call, artifacts plus manifest.
"""

import logging
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from rdfront.core.errors import ConfigurationError, fault_chain
from rdfront.core.settings import Settings
from rdfront.models.assembly import (
    ConstructionConfig,
    FrontAssembly,
    FrontBundle,
    ResidualLattice,
    StabilityConfig,
    StabilityParams,
    WindowSpec,
)
from rdfront.models.experiment import ExperimentConfig, ExperimentKind, RunResult
from rdfront.models.front import FrontConfig, FrontOutcome
from rdfront.models.grid import Field, Grid, SolverConfig
from rdfront.models.medium import PeriodicMedium
from rdfront.models.speed import SpeedMap, Variant
from rdfront.services.front_family import ClosedFormFamily, InterpolatedFamily
from rdfront.services.fronts_service import (
    STABILITY_KINDS,
    apply_calibration,
    build_assembly,
    calibrate_eps_alpha,
    check_squeeze,
    construct_front,
    planar_solution,
    run_stability,
    shift_facets,
    squeeze_evaluator,
    stability_bound_rows,
    stability_initial_data,
    transition_metrics,
    verify_speed_margin,
    vertex_blow_down,
)
from rdfront.services.geometry_service import (
    cap_angle,
    direction_at,
    hessian_eigenvalues,
    polytope_from_angles,
    surface_height,
    surface_table,
)
from rdfront.services.medium_service import (
    constant_diffusion,
    constant_theta,
    preset_medium,
    validate_medium,
)
from rdfront.services.pulsating_service import closed_form_speed, compute_front
from rdfront.services.solver_service import check_comparison
from rdfront.services.speedmap_service import (
    build_speed_map,
    check_theorem_conditions,
    closed_form_speed_map,
    compute_fronts,
    condition_frame,
    condition_text,
    reversed_speed_map,
    speed_map_frame,
)
from rdfront.storage import (
    emit_figure,
    emit_heatmap,
    write_csv,
    write_front_diagnostics,
    write_manifest,
    write_profile,
    write_text,
)

logger = logging.getLogger(__name__)

STATUS_OK = 0
STATUS_FAULT = 1
STATUS_ASSERTION = 2

Outcome = Tuple[Dict[str, bool], List[str]]


class ExperimentService:
    """Runs one experiment kind and writes its artifact directory."""

    def __init__(
        self,
        config: ExperimentConfig,
        output_dir: Optional[Path] = None,
        workers: Optional[int] = None,
        seed: Optional[int] = None,
    ):
        self.config = config
        section = config.experiment
        default_dir = Path(Settings.OUTPUT_DIR) / section.kind.value
        self.output_dir = Path(output_dir or section.output_dir or default_dir)
        self.workers = workers or section.workers or Settings.DEFAULT_WORKERS
        self.seed = section.seed if seed is None else seed
        self.timings: Dict[str, float] = {}
        self.outputs: List[Path] = []
        self._medium: Optional[PeriodicMedium] = None

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = time.perf_counter() - start
            logger.info(f"Stage '{name}' took {self.timings[name]:.2f}s")

    def _save(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def run(self) -> RunResult:
        kind = self.config.experiment.kind
        runners = {
            ExperimentKind.VALIDATE_MEDIUM: self.run_validate_medium,
            ExperimentKind.FRONT_SPEED: self.run_front_speed,
            ExperimentKind.SPEED_MAP: self.run_speed_map,
            ExperimentKind.SURFACE: self.run_surface,
            ExperimentKind.CONDITIONS: self.run_conditions,
            ExperimentKind.BUILD_FRONT: self.run_build_front,
            ExperimentKind.VERIFY_BOUNDS: self.run_verify_bounds,
            ExperimentKind.STABILITY: self.run_stability,
        }
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Running '{kind.value}' into {self.output_dir}")

        assertions: Dict[str, bool] = {}
        summary: List[str] = []
        faults: List[Dict[str, str]] = []
        try:
            with self.stage("total"):
                assertions, summary = runners[kind]()
            status = STATUS_OK if all(assertions.values()) else STATUS_ASSERTION
        except Exception as e:
            logger.error(f"Experiment '{kind.value}' failed: {e}")
            faults = fault_chain(e)
            status = STATUS_FAULT
            summary.append(f"FAULT: {type(e).__name__}: {e}")

        lines = [f"experiment: {kind.value}", f"seed: {self.seed}"] + summary
        for name, passed in assertions.items():
            lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}")
        lines.append(f"status: {status}")
        self._save(write_text(self.output_dir / "summary.txt", lines))
        write_manifest(
            self.output_dir,
            self.config.echo(),
            self.timings,
            assertions=assertions,
            faults=faults,
            status=status,
        )
        return RunResult(
            kind=kind,
            output_dir=str(self.output_dir),
            status=status,
            assertions=assertions,
            summary=lines,
            outputs=[str(p) for p in self.outputs],
            faults=faults,
        )

    # builders

    def medium(self) -> PeriodicMedium:
        if self._medium is None:
            self._medium = preset_medium(**self.config.medium.model_dump())
        return self._medium

    def front_config(self, want_profile: bool = True) -> FrontConfig:
        numerics = self.config.numerics
        return FrontConfig(
            h=numerics.h,
            dt=numerics.dt,
            t_max=numerics.t_max,
            want_profile=want_profile,
        )

    def polytope(self):
        geometry = self.config.geometry
        if len(geometry.e0) == 2:
            return polytope_from_angles(geometry.e0, geometry.angles)
        raise ConfigurationError(
            "facets are given as angles, which needs a two-dimensional e0"
        )

    def _homogeneous_data(self) -> Tuple[float, np.ndarray]:
        medium = self.medium()
        theta, A = constant_theta(medium), constant_diffusion(medium)
        if theta is None or A is None:
            raise ConfigurationError(
                f"closed-form fronts need constant theta and diffusion; "
                f"medium '{medium.name}' is heterogeneous"
            )
        return theta, A

    def speed_map(self) -> SpeedMap:
        numerics = self.config.numerics
        e0 = self.config.geometry.e0 if self.config.geometry else [0.0, 1.0]
        if numerics.speed_source == "reversed-override":
            return reversed_speed_map(e0)
        if numerics.speed_source == "closed-form":
            theta, A = self._homogeneous_data()
            return closed_form_speed_map(theta, A, e0)
        return build_speed_map(
            self.medium(),
            e0,
            numerics.directions,
            self.front_config(want_profile=False),
            self.workers,
            numerics.interpolation,
        )

    def family(self, poly):
        front = self.config.front
        if front.profiles == "closed-form":
            theta, A = self._homogeneous_data()
            return ClosedFormFamily(theta, A)
        beta = cap_angle(poly, poly.directions)
        arc = math.radians(front.profile_arc)
        angles = np.linspace(beta.min() - arc, beta.max() + arc, front.profile_count)
        fronts = compute_fronts(
            self.medium(), direction_at(poly, angles), self.front_config(), self.workers
        )
        for f in fronts:
            if f.outcome != FrontOutcome.CONVERGED:
                logger.warning(
                    f"Front along {np.round(f.direction, 4).tolist()} not usable: "
                    f"{f.outcome.value}"
                )
        return InterpolatedFamily(fronts, poly.e0)

    def assembly(self) -> Tuple[FrontAssembly, SpeedMap]:
        front = self.config.front
        variant = Variant(front.variant)
        poly = self.polytope()
        with self.stage("speed_map"):
            speed_map = self.speed_map()
        conditions = check_theorem_conditions(speed_map, poly, variant)
        self._save(
            write_csv(self.output_dir / "conditions.csv", condition_frame(conditions))
        )
        with self.stage("profiles"):
            family = self.family(poly)
        assembly = build_assembly(
            self.medium(),
            poly,
            speed_map,
            family,
            variant=variant,
            epsilon=None if front.epsilon == "auto" else front.epsilon,
            alpha=None if front.alpha == "auto" else front.alpha,
            conditions=conditions,
        )
        return assembly, speed_map

    def residual_lattice(self) -> ResidualLattice:
        numerics = self.config.numerics
        return ResidualLattice(h=numerics.residual_h, dt=numerics.residual_dt)

    def window(self) -> WindowSpec:
        front = self.config.front
        return WindowSpec(
            half_width=front.half_width,
            below=front.below,
            above=front.above,
            h=self.config.numerics.h,
            dt=self.config.numerics.dt,
            snapshot_every=front.snapshot_every,
        )

    def construction(self) -> ConstructionConfig:
        front = self.config.front
        return ConstructionConfig(
            initial_periods=front.initial_periods,
            max_doublings=front.max_doublings,
            tol=front.tol,
            sandwich_slack=front.sandwich_slack,
            from_upper=front.from_upper,
        )

    # runners

    def run_validate_medium(self) -> Outcome:
        medium = self.medium()
        density = self.config.medium.sampling_density
        with self.stage("validate"):
            report = validate_medium(medium, density, seed=self.seed)
        rows = [check.model_dump() for check in report.checks]
        self._save(write_csv(self.output_dir / "validation.csv", rows))
        self._save(
            write_csv(
                self.output_dir / "theta_samples.csv",
                pd.DataFrame({"theta": report.theta_samples}),
            )
        )
        summary = [
            f"medium: {medium.name}",
            f"H1 integral: {report.h1_integral:.10g} (sign {report.h1_sign})",
        ]
        if report.h1_boundary_case:
            summary.append("H1 boundary case: the reaction integrates to zero")
        assertions = {"medium_valid": report.passed}

        pairs = self.config.numerics.comparison_pairs
        if pairs:
            with self.stage("comparison"):
                reports = self._comparison_suite(medium, pairs)
            self._save(
                write_csv(
                    self.output_dir / "comparison.csv",
                    [r.model_dump() for r in reports],
                )
            )
            assertions["comparison_principle"] = all(r.passed for r in reports)
            worst = min(r.min_gap for r in reports)
            summary.append(f"comparison: {pairs} ordered pairs, worst gap {worst:.3e}")
        return assertions, summary

    def _comparison_suite(self, medium: PeriodicMedium, pairs: int) -> list:
        rng = np.random.default_rng(self.seed)
        periods = medium.periods
        upper = [4.0 * L for L in periods]
        grid = Grid.box([0.0] * medium.dim, upper, self.config.numerics.h)
        points = grid.points()
        config = SolverConfig(end_time=2.0)

        def smooth():
            value = np.full(len(points), rng.uniform(0.2, 0.8))
            for _ in range(3):
                k = rng.integers(1, 4, size=medium.dim)
                phase = rng.uniform(0, 2 * np.pi)
                wave = (2 * np.pi * points / np.asarray(upper)) @ k
                value = value + rng.uniform(0.0, 0.2) * np.sin(wave + phase)
            return value

        reports = []
        for _ in range(pairs):
            low = np.clip(smooth(), 0.0, 1.0)
            high = np.clip(low + np.abs(smooth() - 0.5), 0.0, 1.0)
            reports.append(
                check_comparison(medium, Field(grid, low), Field(grid, high), config)
            )
        return reports

    def run_front_speed(self) -> Outcome:
        medium = self.medium()
        angle = math.radians(self.config.numerics.direction)
        e = np.zeros(medium.dim)
        e[0] = math.cos(angle)
        if medium.dim > 1:
            e[1] = math.sin(angle)
        with self.stage("front"):
            front = compute_front(medium, e, self.front_config())
        self._save(
            write_csv(
                self.output_dir / "front.csv",
                [
                    {
                        "speed": front.speed,
                        "stderr": front.stderr,
                        "outcome": front.outcome.value,
                        "commensurate": front.commensurate,
                        "direction_error": front.direction_error,
                    }
                ],
            )
        )
        if front.table is not None:
            self._save(write_profile(self.output_dir / "profile.bin", front))
            self._save(
                write_front_diagnostics(
                    self.output_dir / "profile_diagnostics.csv", front
                )
            )
        summary = [
            f"direction: {np.round(e, 6).tolist()}",
            f"speed: {front.speed:.6f} +/- {front.stderr:.2e} ({front.outcome.value})",
        ]
        assertions: Dict[str, bool] = {}
        theta, A = constant_theta(medium), constant_diffusion(medium)
        if theta is not None and A is not None:
            exact = closed_form_speed(theta, A, e)
            summary.append(f"closed-form speed: {exact:.6f}")
            if abs(exact) > 1e-12:
                error = abs(front.speed - exact)
                assertions["speed_oracle"] = error <= 0.02 * abs(exact)
            else:
                assertions["speed_oracle"] = abs(front.speed) <= 1e-2
        return assertions, summary

    def run_speed_map(self) -> Outcome:
        with self.stage("speed_map"):
            speed_map = self.speed_map()
        frame = speed_map_frame(speed_map)
        self._save(write_csv(self.output_dir / "speed_map.csv", frame))
        speeds = speed_map.speeds
        summary = [
            f"directions: {len(speeds)}",
            f"speed range: [{np.nanmin(speeds):.6f}, {np.nanmax(speeds):.6f}]",
        ]
        if speed_map.failures:
            self._save(write_csv(self.output_dir / "failures.csv", speed_map.failures))
        assertions = {"map_complete": not speed_map.partial}
        A = constant_diffusion(self.medium())
        if (
            self.config.numerics.speed_source == "computed"
            and self.medium().homogeneous
            and A is not None
            and np.allclose(A, A[0, 0] * np.eye(len(A)))
            and not speed_map.partial
        ):
            spread = (speeds.max() - speeds.min()) / abs(speeds.mean())
            summary.append(f"relative speed spread: {spread:.3e}")
            assertions["isotropy"] = spread <= 0.02
        return assertions, summary

    def run_surface(self) -> Outcome:
        geometry = self.config.geometry
        poly = self.polytope()
        line = np.linspace(geometry.x_min, geometry.x_max, geometry.x_count)
        d = poly.dim - 1
        if d == 1:
            xs = line[:, None]
        else:
            mesh = np.meshgrid(*([line] * d), indexing="ij")
            xs = np.stack([m.ravel() for m in mesh], axis=1)
        with self.stage("surface"):
            table = surface_table(poly, xs, geometry.alpha)
            ev = surface_height(poly, xs, geometry.alpha)
        self._save(write_csv(self.output_dir / "surface.csv", table))
        identity = float(np.max(np.abs(np.exp(-ev.q_hat).sum(axis=1) - 1.0)))
        lowest = float(hessian_eigenvalues(ev).min())
        summary = [
            f"facets: {poly.n}, alpha: {geometry.alpha}",
            f"max defining-sum residual: {identity:.3e}",
            f"min Hessian eigenvalue: {lowest:.3e}",
        ]
        assertions = {
            "defining_identity": identity <= 1e-12,
            "convexity": lowest >= -1e-10,
        }
        return assertions, summary

    def run_conditions(self) -> Outcome:
        poly = self.polytope()
        with self.stage("speed_map"):
            speed_map = self.speed_map()
        frame = speed_map_frame(speed_map)
        self._save(write_csv(self.output_dir / "speed_map.csv", frame))
        reports = {v: check_theorem_conditions(speed_map, poly, v) for v in Variant}
        frame = pd.concat([condition_frame(r) for r in reports.values()])
        self._save(write_csv(self.output_dir / "conditions.csv", frame))
        text: List[str] = []
        for report in reports.values():
            text += condition_text(report) + [""]
        self._save(write_text(self.output_dir / "conditions.txt", text))
        summary = [
            f"variant {v.value}: admissible={r.admissible}, all pass={r.passed}"
            for v, r in reports.items()
        ]
        both = reports[Variant.V].passed and reports[Variant.W].passed
        return {"variants_exclusive": not both}, summary

    def run_verify_bounds(self) -> Outcome:
        assembly, _ = self.assembly()
        summary = [f"c_hat: {assembly.c_hat:.6f}"]
        with self.stage("margin"):
            margin = verify_speed_margin(assembly)
        self._save(write_csv(self.output_dir / "margin.csv", [margin.model_dump()]))
        summary.append(
            f"speed margin: {margin.min_ratio:.4e} over {margin.count} points"
        )
        assertions = {"speed_margin": margin.passed}

        with self.stage("calibration"):
            calibration = calibrate_eps_alpha(assembly, self.residual_lattice())
        self._save(
            write_csv(
                self.output_dir / "calibration.csv",
                [row.model_dump() for row in calibration.rows],
            )
        )
        assertions["calibration"] = calibration.passed
        if calibration.passed:
            assembly = apply_calibration(assembly, calibration)
            summary.append(
                f"calibrated epsilon={assembly.epsilon:.4g}, alpha={assembly.alpha:.4g}"
            )

        if assembly.variant == Variant.V:
            rows = vertex_blow_down(assembly, alpha_factors=(1.0, 0.25))
            self._save(write_csv(self.output_dir / "vertex.csv", rows))
            assertions["vertex_blow_down"] = (
                rows[-1]["window_min"] >= 1.0 - 2.0 * assembly.epsilon
            )

        with self.stage("squeeze"):
            rows = self._squeeze_rows(assembly)
        self._save(write_csv(self.output_dir / "squeeze.csv", rows))
        assertions["squeeze_super"] = rows[0]["passed"]
        assertions["squeeze_sub"] = rows[1]["passed"]
        return assertions, summary

    def _squeeze_rows(self, assembly: FrontAssembly) -> List[dict]:
        medium = assembly.medium
        numerics = self.config.numerics
        base = planar_solution(assembly, 0)
        grid = Grid.box([-6.0] * medium.dim, [6.0] * medium.dim, numerics.residual_h)
        params = StabilityParams(delta=self.config.stability.delta)
        rows = []
        for sign in (1, -1):
            evaluator = squeeze_evaluator(base, medium, params, sign, grid.points())
            report = check_squeeze(
                evaluator, medium, grid, (0.5, 1.0, 2.0), numerics.residual_dt
            )
            rows.append(report.model_dump())
        return rows

    def _build(self, assembly: FrontAssembly) -> Tuple[FrontAssembly, FrontBundle]:
        front = self.config.front
        calibration = None
        if front.epsilon == "auto" or front.alpha == "auto":
            with self.stage("calibration"):
                calibration = calibrate_eps_alpha(assembly, self.residual_lattice())
            self._save(
                write_csv(
                    self.output_dir / "calibration.csv",
                    [row.model_dump() for row in calibration.rows],
                )
            )
            if calibration.passed:
                assembly = apply_calibration(assembly, calibration)
            else:
                logger.warning("Calibration failed; constructing with defaults")
        with self.stage("construction"):
            bundle = construct_front(
                assembly,
                self.window(),
                self.construction(),
                store_dir=self.output_dir / "snapshots",
            )
        bundle.calibration = calibration
        return assembly, bundle

    def _bundle_artifacts(self, assembly: FrontAssembly, bundle: FrontBundle):
        report = bundle.construction
        rows = [{"horizon": report.horizons[0], "difference": float("nan")}]
        rows += [
            {"horizon": T, "difference": d}
            for T, d in zip(report.horizons[1:], report.cauchy_differences)
        ]
        self._save(write_csv(self.output_dir / "construction.csv", rows))
        sandwich = {
            key: getattr(report, key)
            for key in (
                "min_lower_gap",
                "min_planar_gap",
                "min_upper_gap",
                "min_increment",
                "sandwich_tol",
                "upper_allowance",
                "sandwich_threshold",
            )
        }
        self._save(write_csv(self.output_dir / "sandwich.csv", [sandwich]))
        interface_rows = []
        for t, lines in bundle.interfaces:
            for k, line in enumerate(lines):
                for point in line:
                    interface_rows.append(
                        {"t": t, "line": k, "x": point[0], "y": point[1]}
                    )
        self._save(
            write_csv(
                self.output_dir / "interfaces.csv",
                interface_rows,
                columns=["t", "line", "x", "y"],
            )
        )
        final = Field(bundle.grid, bundle.values, 0.0)
        self._save(emit_heatmap(final, self.output_dir / "front.ppm"))
        last_lines = bundle.interfaces[-1][1] if bundle.interfaces else []
        self._save(
            emit_figure(
                bundle.snapshots[-1] if bundle.snapshots else final,
                self.output_dir / "front.png",
                interfaces=last_lines,
                title=f"variant {assembly.variant.value}, c_hat = {assembly.c_hat:.4f}",
            )
        )

    def run_build_front(self) -> Outcome:
        assembly, _ = self.assembly()
        assembly, bundle = self._build(assembly)
        self._bundle_artifacts(assembly, bundle)
        report = bundle.construction
        with self.stage("metrics"):
            metrics = transition_metrics(
                assembly, bundle, self.config.front.metric_levels
            )
        self._save(
            write_csv(
                self.output_dir / "metrics.csv",
                pd.DataFrame(
                    {
                        "epsilon": metrics.epsilons,
                        "M": metrics.widths,
                        "drift_speed": metrics.drift_speed,
                        "drift_stderr": metrics.drift_stderr,
                        "inf_distance_rate": metrics.inf_distance_rate,
                        "far_field_radius": metrics.far_field_radius,
                        "far_field_gap": metrics.far_field_gap,
                    }
                ),
            )
        )
        summary = [
            f"c_hat: {assembly.c_hat:.6f}, epsilon: {assembly.epsilon:.4g}, "
            f"alpha: {assembly.alpha:.4g}",
            f"horizons: {[round(T, 3) for T in report.horizons]}",
            f"Cauchy differences: {report.cauchy_differences}",
            f"drift speed: {metrics.drift_speed:.6f}",
            f"inf-distance rate: {metrics.inf_distance_rate:.6f}",
            f"far-field gap: {metrics.far_field_gap:.3e} beyond "
            f"D={metrics.far_field_radius:.3g}",
            f"sandwich gaps: planar columns {report.min_lower_gap:.3e}, "
            f"planar mix {report.min_planar_gap:.3e}, "
            f"curved bound {report.min_upper_gap:.3e} "
            f"(tolerance {report.sandwich_tol:.0e}, "
            f"discretisation allowance {report.upper_allowance:.3e})",
        ]
        assertions = {
            "converged": report.converged,
            "sandwich_lower": report.lower_within_tol,
            "sandwich_upper": report.upper_within_tol,
            "time_monotone": report.min_increment >= -1e-8,
            "far_field": metrics.far_field_gap <= 2 * assembly.epsilon + 5e-3,
            "drift_speed": abs(metrics.drift_speed - assembly.c_hat)
            <= 0.02 * assembly.c_hat,
        }
        if report.upper_start_difference is not None:
            summary.append(
                f"difference to the run from the curved bound: "
                f"{report.upper_start_difference:.3e}"
            )
            assertions["uniqueness"] = report.upper_start_difference <= 1e-3
        return assertions, summary

    def run_stability(self) -> Outcome:
        assembly, _ = self.assembly()
        assembly, bundle = self._build(assembly)
        self._bundle_artifacts(assembly, bundle)
        section = self.config.stability
        config = StabilityConfig(
            horizon=section.horizon,
            bump_height=section.bump_height,
            bump_radius=section.bump_radius,
            initial_alpha=section.initial_alpha,
            target_gap=section.target_gap,
            far_field_radius=section.far_field_radius,
        )
        params = StabilityParams(
            delta=section.delta, facet_weights=section.facet_weights
        )
        assembly = shift_facets(assembly, params)
        summary = [f"c_hat: {assembly.c_hat:.6f}"]
        assertions: Dict[str, bool] = {}
        if assembly.shifted:
            rows = stability_bound_rows(assembly, bundle.grid.points())
            self._save(write_csv(self.output_dir / "stability_bounds.csv", rows))
            summary.append(
                "shifted bounds: "
                + ", ".join(
                    f"facet {r['facet']} lam={r['lam']:.3g} "
                    f"excess={r['excess']:.3e}"
                    for r in rows
                )
            )
        for kind in section.initial_data:
            if kind not in STABILITY_KINDS:
                raise ConfigurationError(
                    f"unknown initial data '{kind}', use one of {STABILITY_KINDS}"
                )
            u0 = stability_initial_data(assembly, bundle, kind, config)
            with self.stage(f"stability_{kind}"):
                report = run_stability(
                    assembly, bundle, u0, config, self.window(), label=kind
                )
            self._save(
                write_csv(
                    self.output_dir / f"stability_{kind}.csv",
                    pd.DataFrame(
                        {"t": report.times, "s": report.gaps, "tau": report.shifts}
                    ),
                )
            )
            summary.append(f"{kind}: s(T) = {report.final_gap:.3e}")
            assertions[f"stability_{kind}"] = report.passed
        return assertions, summary


def run_experiment(
    config: ExperimentConfig,
    output_dir: Optional[Path] = None,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
) -> RunResult:
    return ExperimentService(config, output_dir, workers, seed).run()
