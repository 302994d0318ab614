"""
Experiment service
Loads experiment configs, runs the selected suite item by item and writes the run directory
"""
import cmath
import hashlib
import json
import logging
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from dateutil.tz import tzutc
from pydantic import ValidationError

from app.core.config import resolve_jobs, settings
from app.core.exceptions import ConfigError, LabError, SeminormDivergenceError
from app.core.workers import parallel_map
from app.models.profile import CoefficientName, CoefficientProfile
from app.models.sector import SectorGrid
from app.schemas.experiment import (
    ExperimentConfig,
    InitialDataConfig,
    RunRecord,
    Suite,
    SuiteOutcome,
)
from app.schemas.report import CheckResult, Verdict, combine_verdicts
from app.schemas.scan import ScanTarget
from app.services.coefficient_service import CoefficientService
from app.services.evolution_service import ENVELOPE_SLACK, EvolutionService
from app.services.free_wave_service import FreeWaveService
from app.services.identity_service import IdentityService
from app.services.mourre_service import MourreService
from app.services.scaling_service import ScalingService, theta_window
from app.storage.run_store import RunStore

logger = logging.getLogger(__name__)

EVEN_STEP = 1e-5
EVEN_TOL = 1e-8
ENERGY_EPSILON = 0.1
HUYGENS_RATE = 3.0
SLOPE_REFINEMENT_TOL = 0.05
UNHASHED_KEYS = ("plots",)       # artifacts only; no number depends on them

Item = Tuple[str, Callable[[], SuiteOutcome]]


def _failed(name: str, exc: LabError) -> SuiteOutcome:
    logger.warning("item %s failed: %s", name, exc)
    check = CheckResult(name=name, value=0.0, threshold=0.0, verdict=Verdict.INCONCLUSIVE, note=str(exc))
    return SuiteOutcome(checks=[check], failures=[name])


def _guarded(item: Item) -> SuiteOutcome:
    name, measure = item
    try:
        return measure()
    except LabError as exc:
        return _failed(name, exc)


def bump(grid: SectorGrid, data: InitialDataConfig) -> Tuple[np.ndarray, np.ndarray]:
    """(f, g) = (f_amp, g_amp) * exp(1 - 1/(1 - s^2)), s = r / support, zero for s >= 1"""
    s = grid.nodes / data.support
    profile = np.zeros(grid.n)
    inside = s < 1
    profile[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return data.f_amp * profile, data.g_amp * profile


def _diagnostic_location(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


class ExperimentService:
    """Service for experiment orchestration"""

    @staticmethod
    def load_config(path: Path) -> ExperimentConfig:
        """
        Parse and validate a TOML experiment config

        Raises:
            ConfigError: With line and column for syntax errors, dotted key paths for schema errors
        """
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}")
        try:
            return ExperimentConfig.model_validate(raw)
        except ValidationError as exc:
            problems = [f"{_diagnostic_location(err['loc'])}: {err['msg']}" for err in exc.errors()]
            raise ConfigError(f"{path}: invalid config\n  " + "\n  ".join(problems), context={"errors": len(problems)})

    @staticmethod
    def resolve(config: ExperimentConfig) -> ExperimentConfig:
        """Fill the defaults that depend on other sections so they appear in the resolved copy"""
        config = config.model_copy(deep=True)
        params = config.params
        step = config.grid.r_max / (config.grid.n + 1) / 2
        if config.suite == Suite.PROFILE_COMPARE:
            if params.delta is None:
                params.delta = config.profile.d + 3.0
            if params.radius is None:
                params.radius = params.data.support
            if params.t_lo is None:
                # four diameters of the data support
                params.t_lo = 8 * params.data.support
            if params.dt is None:
                params.dt = step
        elif config.suite == Suite.DECAY_RUN:
            if params.delta is None:
                params.delta = config.profile.d + 3.0
            if params.radius is None:
                params.radius = params.data.support
            if params.dt is None:
                params.dt = step
        elif config.suite == Suite.THETA_SCAN:
            if params.rho is None:
                params.rho = config.profile.rho1
            chosen = params.s if isinstance(params.s, dict) else {}
            uniform = params.s if isinstance(params.s, (int, float)) else None
            resolved: Dict[int, float] = {}
            for sigma in params.sigmas:
                if sigma in chosen:
                    resolved[sigma] = chosen[sigma]
                elif uniform is not None:
                    resolved[sigma] = float(uniform)
                elif sigma in (0, 1, 2):
                    lo, hi = theta_window(sigma, config.profile.d, params.rho)
                    resolved[sigma] = (lo + hi) / 2
            params.s = resolved
        return config

    @staticmethod
    def resolved_payload(config: ExperimentConfig) -> Dict[str, Any]:
        """Resolved config as plain JSON data; sections of other suites are dropped"""
        return config.model_dump(mode="json", exclude={
            name for name, value in config if value is None and name != "output_dir"
        })

    @staticmethod
    def experiment_id(payload: Dict[str, Any]) -> str:
        """First 12 hex digits of sha256 over the canonical JSON; the plot flag is left out"""
        payload = {key: value for key, value in payload.items() if key not in UNHASHED_KEYS}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    @staticmethod
    def items(config: ExperimentConfig, profile: CoefficientProfile, grid: SectorGrid, experiment_id: str) -> List[Item]:
        """Independent work items of the selected suite in submission order"""
        builders = {
            Suite.COEFFS: _coeffs_items,
            Suite.RESOLVENT_SCAN: _resolvent_scan_items,
            Suite.WEIGHT_SCAN: _weight_scan_items,
            Suite.THETA_SCAN: _theta_scan_items,
            Suite.IDENTITY_TESTS: _identity_items,
            Suite.DECAY_RUN: _decay_items,
            Suite.PROFILE_COMPARE: _profile_compare_items,
            Suite.HUYGENS: _huygens_items,
            Suite.MOURRE: _mourre_items,
            Suite.SYNTHESIS_CHECK: _synthesis_items,
        }
        return builders[config.suite](config, profile, grid, experiment_id)

    @staticmethod
    def execute(config: ExperimentConfig, experiment_id: str, jobs: int = 1) -> SuiteOutcome:
        """
        Run every item of the suite; a lab error inside an item is recorded, siblings continue

        Args:
            config: Resolved experiment config
            experiment_id: Id stamped on every report
            jobs: Worker threads for the items

        Returns:
            SuiteOutcome: Merged results in submission order
        """
        profile = CoefficientService.build_profile(config.profile)
        grid = SectorGrid(config.profile.d, 0, config.grid.r_max, config.grid.n)
        items = ExperimentService.items(config, profile, grid, experiment_id)
        logger.info("suite %s: %d items on %r with %d worker(s)", config.suite.value, len(items), grid, jobs)
        outcome = SuiteOutcome()
        for part in parallel_map(_guarded, items, jobs):
            outcome.extend(part)
        _finalize(config, outcome)
        return outcome

    @staticmethod
    def run(
        config_path: Path,
        out: Optional[Path] = None,
        plots: bool = False,
        jobs: Optional[int] = None,
    ) -> Tuple[RunRecord, Path]:
        """
        Execute one experiment config and write its run directory

        Args:
            config_path: TOML config
            out: Run directory (default: config output_dir, else OUTPUT_DIR/<name>-<id>)
            plots: Emit gnuplot scripts regardless of the config flag
            jobs: Worker count (default: DWLAB_JOBS, else 1)

        Returns:
            Tuple[RunRecord, Path]: Record and run directory

        Raises:
            ConfigError: If the config does not parse or validate
            ProfileError: If the profile violates its hypotheses
        """
        config = ExperimentService.load_config(config_path)
        if plots:
            config = config.model_copy(update={"plots": True})
        config = ExperimentService.resolve(config)
        payload = ExperimentService.resolved_payload(config)
        experiment_id = ExperimentService.experiment_id(payload)
        root = Path(out or config.output_dir or Path(settings.OUTPUT_DIR) / f"{config.name}-{experiment_id}")
        store = RunStore(root)
        logger.info("experiment %s (%s) -> %s", config.name, experiment_id, root)

        artifacts = [store.write_resolved_config(payload)]
        outcome = ExperimentService.execute(config, experiment_id, resolve_jobs(jobs))
        verdicts = outcome.verdicts()
        verdict = combine_verdicts(verdicts)
        artifacts.append(store.write_summary(experiment_id, config.suite.value, outcome, verdict))
        artifacts += store.write_tables(experiment_id, outcome)
        if config.plots:
            artifacts += store.write_plots(outcome)

        counts: Dict[str, int] = {}
        for item in verdicts:
            counts[item.value] = counts.get(item.value, 0) + 1
        record = RunRecord(
            experiment_id=experiment_id,
            name=config.name,
            suite=config.suite,
            timestamp=datetime.now(tzutc()),
            artifacts=sorted(artifacts + ["run_record.json"]),
            verdicts=counts,
            verdict=verdict,
            failures=len(outcome.failures),
        )
        store.write_record(record)
        logger.info("experiment %s finished: %s %s", experiment_id, verdict.value, counts)
        return record, root

    @staticmethod
    def report(run_dir: Path) -> str:
        """
        One table per result family with pointers to the CSVs; also written to report.txt

        Raises:
            ArtifactError: If expected artifacts are missing
        """
        store = RunStore(Path(run_dir))
        summary, outcome, record = store.load()
        text = render_report(summary, outcome, record)
        store.write_report(text)
        return text


# ---------------------------------------------------------------- suite items


def _coeffs_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.coeffs
    rho0 = profile.rho0

    def constants() -> SuiteOutcome:
        return SuiteOutcome(constants=CoefficientService.hypothesis_constants(profile))

    def seminorm(component: str, kappa: float) -> Item:
        name = f"seminorm {component} kappa={kappa:g}"

        def measure() -> SuiteOutcome:
            try:
                estimate = CoefficientService.seminorm(
                    profile.component(component), kappa, d=profile.d, points_per_octave=params.points_per_octave
                )
            except SeminormDivergenceError as exc:
                return SuiteOutcome(checks=[CheckResult(
                    name=name, value=math.inf, threshold=0.0, verdict=Verdict.VIOLATION, note=str(exc)
                )])
            return SuiteOutcome(checks=[CheckResult(
                name=name, value=estimate.value, threshold=0.0, verdict=Verdict.CONSISTENT,
                note=f"finite up to order {estimate.max_order}, sup at r={estimate.argmax_r:.4g}",
            )])
        return name, measure

    def sharpness() -> SuiteOutcome:
        name = "sharpness witness a"
        kappa = 1 + rho0 + params.sharpness_margin
        pure = profile.a_amp > 0 and not any(b.target == CoefficientName.A for b in profile.bumps)
        if not pure:
            return SuiteOutcome(checks=[CheckResult(
                name=name, value=0.0, threshold=kappa, verdict=Verdict.INCONCLUSIVE,
                note="needs a pure power damping profile",
            )])
        try:
            estimate = CoefficientService.seminorm(profile.component("a"), kappa, d=profile.d,
                                                   points_per_octave=params.points_per_octave)
        except SeminormDivergenceError as exc:
            return SuiteOutcome(checks=[CheckResult(
                name=name, value=math.inf, threshold=kappa, verdict=Verdict.CONSISTENT, note=str(exc)
            )])
        return SuiteOutcome(checks=[CheckResult(
            name=name, value=estimate.value, threshold=kappa, verdict=Verdict.VIOLATION,
            note="seminorm stayed finite above the admissible order",
        )])

    def evenness() -> SuiteOutcome:
        checks = []
        probe = np.array([-EVEN_STEP, EVEN_STEP])
        for label, fn in (("g", profile.g), ("w", profile.w), ("a", profile.a)):
            low, high = fn(probe)
            slope = abs(float(high - low)) / (2 * EVEN_STEP)
            verdict = Verdict.CONSISTENT if slope < EVEN_TOL else Verdict.VIOLATION
            checks.append(CheckResult(name=f"even at 0: {label}", value=slope, threshold=EVEN_TOL, verdict=verdict))
        return SuiteOutcome(checks=checks)

    return [
        ("hypothesis-constants", constants),
        seminorm("g-1", rho0),
        seminorm("w-1", rho0),
        seminorm("a", 1 + rho0),
        ("sharpness", sharpness),
        ("evenness", evenness),
    ]


def _resolvent_scan_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.resolvent_scan
    numerics = config.numerics
    items: List[Item] = []
    for target in params.targets:
        for n in params.orders:
            def measure(target: ScanTarget = target, n: int = n) -> SuiteOutcome:
                spec = ScalingService.build_resolvent_scan(
                    profile.d, n, target, config.profile.rho1,
                    angle=params.angle,
                    r_samples=params.r_samples,
                    delta=params.delta,
                    ell_max=config.grid.ell_max,
                    tolerance=params.tolerance,
                    drop_largest=params.drop_largest,
                    cap_strength=numerics.cap_strength,
                    ball_radius=params.ball_radius,
                    power=numerics.power,
                )
                return SuiteOutcome(scaling=[ScalingService.scan_resolvent(profile, grid, spec, experiment_id)])
            items.append((f"{target.value}-n{n}", measure))
    if params.high_frequency:
        def high_frequency() -> SuiteOutcome:
            report = ScalingService.high_frequency_check(
                profile, grid, params.high_frequency, experiment_id, numerics.power
            )
            # informational only
            if report.verdict == Verdict.VIOLATION:
                report.notes.append("slope above -1 (informational, not counted)")
                report.verdict = Verdict.INCONCLUSIVE
            return SuiteOutcome(scaling=[report])
        items.append(("high-frequency", high_frequency))
    return items


def _weight_scan_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.weight_scan

    def item(s: float) -> Item:
        delta = s + params.delta_offset
        return f"weight-s{s:g}", lambda: SuiteOutcome(scaling=[ScalingService.scan_weight(
            grid, s, delta, params.r_samples, experiment_id, config.numerics.power
        )])
    return [item(s) for s in params.s_values]


def _theta_scan_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.theta_scan

    def item(sigma: int) -> Item:
        def measure() -> SuiteOutcome:
            s = params.s.get(sigma) if isinstance(params.s, dict) else params.s
            if s is None:
                lo, hi = theta_window(sigma, profile.d, params.rho)
                s = (lo + hi) / 2
            return SuiteOutcome(scaling=[ScalingService.scan_theta(
                profile, grid, sigma, s, params.rho, params.r_samples, params.angle,
                experiment_id, config.numerics.power,
            )])
        return f"theta{sigma}", measure
    return [item(sigma) for sigma in params.sigmas]


def _identity_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.identity_tests
    z = complex(params.z_real, params.z_imag)
    seed = config.numerics.seed

    def single(check: Callable[[], CheckResult]) -> Callable[[], SuiteOutcome]:
        return lambda: SuiteOutcome(checks=[check()])

    def many(checks: Callable[[], List[CheckResult]]) -> Callable[[], SuiteOutcome]:
        return lambda: SuiteOutcome(checks=checks())

    return [
        ("solve-roundtrip", single(lambda: IdentityService.solve_roundtrip(profile, grid, z, seed))),
        ("difference-identity", single(lambda: IdentityService.difference_identity(profile, grid, z, seed))),
        ("adjoint-law", single(lambda: IdentityService.adjoint_law(profile, profile.d, z, params.adjoint_n))),
        ("coercivity", single(lambda: IdentityService.coercivity(profile, grid, z, seed))),
        ("expansions", many(lambda: IdentityService.expansion_identities(
            profile, grid, z, seed, params.expansion_depth))),
        ("theta-consistency", many(lambda: IdentityService.theta_consistency(profile, grid, z, seed))),
        ("derivative-oracle", many(lambda: IdentityService.derivative_checks(
            profile, grid, z, seed, params.derivative_order))),
    ]


def _decay_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.decay_run
    f, g = bump(grid, params.data)

    def free() -> SuiteOutcome:
        # the free comparison starts from the data seen by the free equation
        f0, g0 = EvolutionService.free_data(profile, grid, f, g)
        return SuiteOutcome(decay=[FreeWaveService.local_decay(grid, f0, g0, params.radius, params.times,
                                                               experiment_id)])

    def perturbed() -> SuiteOutcome:
        report = EvolutionService.profile_comparison(
            profile, grid, f, g, params.delta or profile.d + 3.0, params.times, config.profile.rho1,
            radius=params.radius, t_lo=params.times[0], dt=params.dt,
            experiment_id=experiment_id,
        )
        return SuiteOutcome(decay=[report.model_copy(update={"label": "perturbed"})])

    def envelope() -> SuiteOutcome:
        states = EvolutionService.evolve(
            profile, grid, f, g, [0.0] + list(params.times), dt=params.dt, verify_step=False,
        )
        ratio = EvolutionService.energy_envelope(profile, grid, states, ENERGY_EPSILON)
        verdict = Verdict.CONSISTENT if ratio <= ENVELOPE_SLACK else Verdict.VIOLATION
        return SuiteOutcome(checks=[CheckResult(
            name="modified-energy envelope", value=ratio, threshold=ENVELOPE_SLACK, verdict=verdict,
            note=f"epsilon={ENERGY_EPSILON:g}",
        )])

    items: List[Item] = [("free-local-decay", free)]
    if params.perturbed and not profile.is_free:
        items += [("perturbed-local-decay", perturbed), ("energy-envelope", envelope)]
    return items


def _profile_compare_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.profile_compare
    f, g = bump(grid, params.data)
    dt = params.dt if params.dt is not None else grid.h / 2

    def comparison(step: float, label: str) -> Item:
        def measure() -> SuiteOutcome:
            report = EvolutionService.profile_comparison(
                profile, grid, f, g, params.delta, params.times, config.profile.rho1,
                radius=params.radius, t_lo=params.t_lo, dt=step, experiment_id=experiment_id,
            )
            return SuiteOutcome(decay=[report.model_copy(update={"label": label})])
        return label, measure

    return [comparison(dt, "profile-compare"), comparison(dt / 2, "profile-compare-refined")]


def _huygens_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.huygens
    radius = params.data.support

    def item(t: float) -> Item:
        def measure() -> SuiteOutcome:
            f, g = bump(grid, params.data)
            residual = FreeWaveService.huygens_residual(grid, f, g, t, radius)
            checks = [CheckResult(
                name=f"huygens t={t:g} n={grid.n}", value=residual, threshold=params.tolerance,
                verdict=Verdict.CONSISTENT if residual <= params.tolerance else Verdict.VIOLATION,
            )]
            if params.refine:
                fine = grid.refined()
                ff, gf = bump(fine, params.data)
                refined = FreeWaveService.huygens_residual(fine, ff, gf, t, radius)
                rate = residual / refined if refined > 0 else math.inf
                settled = residual <= 1e-10
                checks.append(CheckResult(
                    name=f"huygens t={t:g} refinement", value=rate, threshold=HUYGENS_RATE,
                    verdict=Verdict.CONSISTENT if rate >= HUYGENS_RATE or settled else Verdict.VIOLATION,
                    note=f"residual {refined:.3e} at n={fine.n}",
                ))
            return SuiteOutcome(checks=checks)
        return f"huygens-t{t:g}", measure
    return [item(t) for t in params.times]


def _mourre_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.mourre
    power = config.numerics.power
    ray = [cmath.rect(r, params.angle) for r in params.radii]
    middle = ray[len(ray) // 2]

    def refinement() -> SuiteOutcome:
        return SuiteOutcome(checks=[MourreService.identity_refinement(profile, grid, middle, params.refinement_levels)])

    def positivity(r: float) -> Item:
        return f"positivity r={r:g}", lambda: SuiteOutcome(
            mourre=MourreService.positivity_along_ray(profile, grid, [r], params.angle, params.k_bound)
        )

    def hypotheses(z: complex) -> Item:
        return f"hypotheses |z|={abs(z):.4g}", lambda: SuiteOutcome(hypotheses=[MourreService.hypothesis_report(
            profile, grid, z, params.upsilon, power.seed, power.tol, power.max_iter
        )])

    items: List[Item] = [("commutator-identity", refinement)]
    items += [positivity(r) for r in params.radii]
    if params.hypotheses:
        items += [hypotheses(z) for z in ray]
    return items


def _synthesis_items(config, profile, grid, experiment_id) -> List[Item]:
    params = config.synthesis_check
    f, g = bump(grid, params.data)

    def crosscheck(mu: float) -> Item:
        return f"synthesis mu={mu:g}", lambda: SuiteOutcome(synthesis=[EvolutionService.fourier_synthesis_crosscheck(
            profile, grid, f, g, mu, params.times, params.tau_max, experiment_id=experiment_id
        )])

    items = [crosscheck(mu) for mu in params.mus]
    if len(params.mus) > 1:
        items.append(("mu-independence", lambda: SuiteOutcome(checks=[EvolutionService.mu_independence(
            profile, grid, f, g, params.mus, params.times, params.tau_max
        )])))
    return items


def _finalize(config: ExperimentConfig, outcome: SuiteOutcome) -> None:
    """Cross-item checks that need the results of several items"""
    if config.suite == Suite.RESOLVENT_SCAN:
        by_order = {}
        for report in outcome.scaling:
            target, _, order = report.kind.rpartition("-n")
            if target == ScanTarget.DERIVATIVE.value:
                by_order[int(order)] = report
        notes = ScalingService.monotone_in_n(by_order)
        if notes:
            logger.warning("resolvent norms not monotone in n: %d note(s)", len(notes))
            by_order[max(by_order)].notes.extend(notes)
    elif config.suite == Suite.PROFILE_COMPARE:
        reports = {report.label: report for report in outcome.decay}
        coarse, fine = reports.get("profile-compare"), reports.get("profile-compare-refined")
        if coarse is None or fine is None:
            return
        gaps = [
            abs(a.slope - b.slope)
            for a, b in zip(coarse.fits, fine.fits)
            if a.name == b.name and a.slope is not None and b.slope is not None
        ]
        if not gaps:
            return
        gap = max(gaps)
        outcome.checks.append(CheckResult(
            name="slope change under dt/2", value=gap, threshold=SLOPE_REFINEMENT_TOL,
            verdict=Verdict.CONSISTENT if gap < SLOPE_REFINEMENT_TOL else Verdict.VIOLATION,
        ))


# ---------------------------------------------------------------- report


def _cell(value, spec: str = ".4g") -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return format(value, spec)
    return str(value)


def _table(title: str, header: List[str], rows: List[List[str]], source: str) -> List[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = [f"== {title} ({source})"]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    return lines + [""]


def render_report(summary: Dict[str, Any], outcome: SuiteOutcome, record: RunRecord) -> str:
    """Plain-text tables; contains no timestamps"""
    lines = [
        f"experiment {summary['experiment_id']}  {record.name}  suite={summary['suite']}",
        f"verdict {summary['verdict']}  " + "  ".join(f"{k}={v}" for k, v in sorted(summary["verdicts"].items())),
        "",
    ]
    if outcome.constants is not None:
        c = outcome.constants
        lines += _table("hypothesis constants", ["C_G", "C_w", "decay g,w", "decay a", "gamma"],
                        [[_cell(c.c_g), _cell(c.c_w), _cell(c.decay_metric), _cell(c.decay_damping),
                          _cell(c.speed_bound)]], "summary.json")
    if outcome.scaling:
        rows = [[r.kind, _cell(r.predicted_exponent), _cell(r.fitted_slope), r.verdict.value,
                 "yes" if r.sharp else "", str(r.failures)] for r in outcome.scaling]
        lines += _table("scaling", ["kind", "predicted", "slope", "verdict", "sharp", "failed"], rows, "scaling.csv")
        for report in outcome.scaling:
            lines += [f"  {report.kind}: {note}" for note in report.notes]
        lines.append("")
    if outcome.decay:
        rows = [[r.label, fit.name, _cell(fit.predicted_exponent), _cell(fit.slope), fit.verdict.value,
                 f"[{fit.t_lo:g}, {fit.t_hi:g}]"] for r in outcome.decay for fit in r.fits]
        lines += _table("decay", ["run", "series", "predicted", "slope", "verdict", "window"], rows, "decay.csv")
    if outcome.synthesis:
        rows = [[_cell(r.mu), _cell(r.max_deviation, ".3e"), _cell(max(r.tail_change, default=0.0), ".3e"),
                 r.verdict.value] for r in outcome.synthesis]
        lines += _table("synthesis", ["mu", "max deviation", "tail change", "verdict"], rows, "checks.csv")
    if outcome.mourre:
        rows = [[_cell(math.hypot(a.z_real, a.z_imag)), _cell(a.eta), str(a.window_size), _cell(a.margin_ratio),
                 _cell(a.commutator_residual, ".3e"), _cell(a.k_bound), a.verdict.value] for a in outcome.mourre]
        lines += _table("positivity", ["|z|", "eta", "window", "margin/|z|^2", "residual", "K", "verdict"],
                        rows, "mourre.csv")
    if outcome.hypotheses:
        rows = [[_cell(math.hypot(h.z_real, h.z_imag)), item.name, item.status.value, _cell(item.value),
                 _cell(item.bound)] for h in outcome.hypotheses for item in h.items]
        lines += _table("hypotheses", ["|z|", "item", "status", "value", "bound"], rows, "checks.csv")
    if outcome.checks:
        rows = [[c.name, _cell(c.value, ".3e"), _cell(c.threshold, ".1e"), c.verdict.value]
                for c in outcome.checks]
        lines += _table("checks", ["check", "value", "threshold", "verdict"], rows, "checks.csv")
    if outcome.failures:
        lines.append("failed items: " + ", ".join(outcome.failures))
        lines.append("")
    return "\n".join(lines)
