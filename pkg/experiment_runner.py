from typing import Any, Dict, List

import numpy as np

from bogoliubov import (
    coeffs,
    compensation_x,
    diagonal_coefficient,
    log_sweep,
    offdiagonal_residual,
    transform_grid,
)
from condensation import condensate_curve, critical_temperature, normal_density_closed_form
from config import RunConfig
from dispersion import default_sigma, sound_speed
from errors import DivergenceError, NoSoundSpeedError, StepSizeError
from evolution import evolve
from kinetics import rate_model
from landau import critical_velocity, instability_witness, log_k_grid
from report_generator import ReportGenerator
from run_manager import RunManager
from snapshot_store import SnapshotStore, write_table
from superfluidity import superfluidity_check
from utils import setup_logger

logger = setup_logger("ExperimentRunner")


class ExperimentRunner:
    """Runs one configured experiment and writes its artifacts, report and manifest."""

    def __init__(self, config: RunConfig):
        self.cfg = config
        self.run_manager = RunManager(config.output_dir)
        self.report_generator = ReportGenerator(config.output_dir)
        self.notes: List[str] = []

    def run(self) -> Dict[str, Any]:
        experiment = self.cfg.experiment
        handlers = {
            "dispersion-sweep": self.run_dispersion_sweep,
            "bogoliubov-sweep": self.run_bogoliubov_sweep,
            "condense": self.run_condense,
            "landau": self.run_landau,
            "evolve": self.run_evolve,
            "check-superfluid": self.run_check_superfluid,
        }
        self.run_manager.create_run(experiment, self.cfg.to_dict())
        self.run_manager.update_status("running")
        logger.info(f"Running experiment: {experiment}")

        try:
            results = handlers[experiment]()
        except Exception as e:
            self.run_manager.update_status("failed", error=f"[{getattr(e, 'module', 'lab')}] {e}")
            raise

        self._write_report(results)
        self.run_manager.update_status("completed", results=results)
        logger.info(f"Experiment {experiment} completed: {self.run_manager.run_id}")
        return results

    # helpers --------------------------------------------------------------------

    def _table(self, filename: str, columns: Dict[str, Any]):
        write_table(self.run_manager.path(filename), columns)
        self.run_manager.record_artifact(filename)
        logger.info(f"Wrote {filename}")

    def _write_report(self, results: Dict[str, Any]):
        self.notes.append(f"form factor: {self.cfg.build_params().f.label}")
        content = self.report_generator.generate_markdown(
            self.cfg.experiment,
            results,
            config=self.cfg.to_dict(),
            notes=self.notes,
            artifacts=self.run_manager.artifacts,
        )
        self.report_generator.save_report(content, "report.md")
        self.run_manager.record_artifact("report.md")
        if self.cfg.report_format == "html":
            self.report_generator.generate_html_report(content, "report.html")
            self.run_manager.record_artifact("report.html")

    # experiments ----------------------------------------------------------------

    def run_dispersion_sweep(self) -> Dict[str, Any]:
        params = self.cfg.build_params()
        model = self.cfg.build_model(params)
        sweep = self.cfg.sweep
        k = np.linspace(sweep.k_max / sweep.points, sweep.k_max, sweep.points)
        energy = model.of_magnitude(k)
        self._table(
            "dispersion.csv",
            {
                "k": k,
                "energy": energy,
                "epsilon": k**2 / (2.0 * params.m),
                "energy_over_k": energy / k,
            },
        )
        results: Dict[str, Any] = {"model": model.kind}
        try:
            results["sound_speed"] = sound_speed(model)
        except NoSoundSpeedError as e:
            results["sound_speed"] = None
            self.notes.append(str(e))
        return results

    def run_bogoliubov_sweep(self) -> Dict[str, Any]:
        sweep = self.cfg.sweep
        point = log_sweep(sweep.omega_range, sweep.t_range, sweep.sweep_points)
        x = compensation_x(point)
        c = coeffs(x)
        offdiag = offdiagonal_residual(point, c)
        diag = diagonal_coefficient(point, c)
        closed = np.sqrt(point.omega**2 + 2.0 * point.omega * point.t)
        self._table(
            "bogoliubov_sweep.csv",
            {
                "omega": point.omega,
                "t": point.t,
                "x": x,
                "u": c.u,
                "v": c.v,
                "offdiag": offdiag,
                "diagonal": diag,
                "energy": closed,
            },
        )

        params = self.cfg.build_params()
        if params.gamma > 0:
            table = transform_grid(self.cfg.build_grid(), params)
            self._table("bogoliubov_grid.csv", table)

        return {
            "pairs": int(point.omega.size),
            "max_offdiag_relative": float(np.max(np.abs(offdiag) / (point.omega + point.t))),
            "max_diagonal_relative_error": float(np.max(np.abs(diag - closed) / closed)),
            "max_normalization_error": float(np.max(np.abs(c.u**2 - c.v**2 - 1.0))),
        }

    def run_condense(self) -> Dict[str, Any]:
        physics = self.cfg.physics
        theta_c = critical_temperature(physics.rho, physics.m)
        section = self.cfg.condense
        if section.temperatures is not None:
            thetas = [float(t) for t in section.temperatures]
        else:
            thetas = [theta_c * (i + 1) / section.count for i in range(section.count)]
        curve = condensate_curve(thetas, physics.rho, physics.m)
        self._table("condense.csv", curve)

        closed = (physics.rho / normal_density_closed_form(1.0, physics.m)) ** (2.0 / 3.0)
        return {
            "theta_c": theta_c,
            "theta_c_closed_form": closed,
            "temperatures": len(thetas),
        }

    def run_landau(self) -> Dict[str, Any]:
        params = self.cfg.build_params()
        model = self.cfg.build_model(params)
        section = self.cfg.landau
        k_grid = log_k_grid(section.k_min, section.k_max, section.points)
        report = critical_velocity(model, params.m, k_grid)

        ratio = (model.of_magnitude(k_grid) + k_grid**2 / (2.0 * params.m)) / k_grid
        self._table("landau.csv", {"k": k_grid, "threshold_velocity": ratio})

        results: Dict[str, Any] = {
            "v_c": report.v_c,
            "argmin_k": report.argmin_k,
            "at_zero": report.at_zero,
            "sufficient_bound": report.sufficient_bound,
        }
        if report.note:
            self.notes.append(report.note)
        if section.velocity is not None:
            u = np.asarray([float(v) for v in section.velocity])
            witness = instability_witness(u, model, params.m, k_grid)
            results["superfluid_at_velocity"] = report.is_superfluid_at(u)
            results["instability_witness"] = None if witness is None else witness.tolist()
        return results

    def run_evolve(self) -> Dict[str, Any]:
        params = self.cfg.build_params()
        model = self.cfg.build_model(params)
        grid = self.cfg.build_grid()
        n0 = self.cfg.build_initial_state(grid)
        evolution = self.cfg.build_evolution()
        reservoir = self.cfg.build_reservoir(model, params)
        store = SnapshotStore(self.cfg.output_dir)

        if evolution.sigma_E is None:
            quadratic = evolution.mode == "nonlinear" and not evolution.retain_unit_occupation
            rates = model if quadratic else rate_model(reservoir, params)
            evolution.sigma_E = default_sigma(grid, rates, params.m)
        manifest = {"config": self.cfg.to_dict(), "sigma_E": evolution.sigma_E}

        try:
            trajectory = evolve(
                n0, evolution, model, params, reservoir=reservoir, workers=self.cfg.workers
            )
        except (DivergenceError, StepSizeError) as e:
            if e.trajectory is not None:
                written = store.save_trajectory(e.trajectory, dict(manifest, status="failed"))
                self.run_manager.record_artifacts(written)
            raise

        self.run_manager.record_artifacts(store.save_trajectory(trajectory, manifest))

        totals = trajectory.totals
        return {
            "mode": evolution.mode,
            "snapshots": len(trajectory.times),
            "t_end": trajectory.times[-1],
            "initial_total": float(totals[0]),
            "final_total": float(totals[-1]),
            "relative_drift": trajectory.relative_drift(),
        }

    def run_check_superfluid(self) -> Dict[str, Any]:
        params = self.cfg.build_params()
        model = self.cfg.build_model(params)
        grid = self.cfg.build_grid()
        n = self.cfg.build_initial_state(grid)
        reservoir = self.cfg.build_reservoir(model, params)

        SnapshotStore(self.cfg.output_dir).save_density(n, "state.csv")
        self.run_manager.record_artifact("state.csv")

        report = superfluidity_check(
            n, model, params, tol=self.cfg.check.tol, sigma_E=self.cfg.check.sigma_E, reservoir=reservoir
        )
        if report.note:
            self.notes.append(report.note)
        results = report.as_dict()
        results.pop("note")
        results.pop("form_factor")
        return results
