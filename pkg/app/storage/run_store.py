"""
Run store
Persists the artifacts of one run directory and reads them back for reporting
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple

from app.core.exceptions import ArtifactError
from app.schemas.experiment import RunRecord, SuiteOutcome
from app.schemas.report import ItemStatus, Verdict

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "resolved_config.json"
SUMMARY = "summary.json"
RUN_RECORD = "run_record.json"
REPORT = "report.txt"
SCALING_CSV = "scaling.csv"
DECAY_CSV = "decay.csv"
CHECKS_CSV = "checks.csv"
MOURRE_CSV = "mourre.csv"
PLOTS_DIR = "plots"

EXPECTED = (RESOLVED_CONFIG, SUMMARY, RUN_RECORD, SCALING_CSV, DECAY_CSV, CHECKS_CSV, MOURRE_CSV)

SCALING_COLUMNS = ["experiment_id", "kind", "r", "ell_argmax", "norm", "predicted_exponent", "fitted_slope",
                   "verdict", "error"]
DECAY_SERIES = ["norm_local", "norm_weighted", "norm_diff", "norm_free", "ratio", "cos_local", "sin_local"]
DECAY_COLUMNS = ["experiment_id", "label", "t"] + DECAY_SERIES
CHECK_COLUMNS = ["experiment_id", "name", "value", "threshold", "verdict", "note"]
MOURRE_COLUMNS = ["experiment_id", "r", "z_real", "z_imag", "eta", "window_size", "positivity_margin",
                  "margin_ratio", "commutator_residual", "k_bound", "verdict"]

_ITEM_VERDICT = {
    ItemStatus.PASS: Verdict.CONSISTENT,
    ItemStatus.FAIL: Verdict.VIOLATION,
    ItemStatus.SKIPPED: Verdict.INCONCLUSIVE,
}


def format_value(value: Any) -> str:
    """CSV cell text: floats as %.12g, enums by value, None empty"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "%.12g" % value
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _write_csv(path: Path, fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in fieldnames})


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


class RunStore:
    """Artifact files of one run directory"""

    def __init__(self, root: Path):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_resolved_config(self, payload: Dict[str, Any]) -> str:
        _write_json(self.path(RESOLVED_CONFIG), payload)
        return RESOLVED_CONFIG

    def write_summary(self, experiment_id: str, suite: str, outcome: SuiteOutcome, verdict: Verdict) -> str:
        """summary.json carries no timestamps so identical configs give identical bytes"""
        counts: Dict[str, int] = {}
        for item in outcome.verdicts():
            counts[item.value] = counts.get(item.value, 0) + 1
        _write_json(self.path(SUMMARY), {
            "experiment_id": experiment_id,
            "suite": suite,
            "verdict": verdict.value,
            "verdicts": counts,
            "outcome": outcome.model_dump(mode="json"),
        })
        return SUMMARY

    def write_tables(self, experiment_id: str, outcome: SuiteOutcome) -> List[str]:
        """scaling.csv, decay.csv, checks.csv and mourre.csv; empty tables keep their header"""
        scaling_rows = [
            {
                "experiment_id": experiment_id,
                "kind": report.kind,
                "r": sample.r,
                "ell_argmax": sample.ell_argmax,
                "norm": sample.norm,
                "predicted_exponent": report.predicted_exponent,
                "fitted_slope": report.fitted_slope,
                "verdict": report.verdict,
                "error": sample.error,
            }
            for report in outcome.scaling
            for sample in report.samples
        ]
        _write_csv(self.path(SCALING_CSV), SCALING_COLUMNS, scaling_rows)

        decay_rows = []
        for report in outcome.decay:
            for k, t in enumerate(report.times):
                row = {"experiment_id": experiment_id, "label": report.label, "t": t}
                row.update({name: values[k] for name, values in report.series.items()})
                decay_rows.append(row)
        _write_csv(self.path(DECAY_CSV), DECAY_COLUMNS, decay_rows)

        check_rows = [dict(check.model_dump(), experiment_id=experiment_id) for check in outcome.checks]
        for report in outcome.decay:
            for fit in report.fits:
                check_rows.append({
                    "experiment_id": experiment_id,
                    "name": f"{report.label} slope {fit.name}",
                    "value": fit.slope,
                    "threshold": fit.predicted_exponent,
                    "verdict": fit.verdict,
                    "note": fit.note,
                })
        for report in outcome.synthesis:
            for t, deviation, tail in zip(report.times, report.deviations, report.tail_change):
                check_rows.append({
                    "experiment_id": experiment_id,
                    "name": f"synthesis mu={report.mu:g} t={t:g}",
                    "value": deviation,
                    "threshold": report.tolerance,
                    "verdict": report.verdict,
                    "note": f"tail change {tail:.3e}",
                })
        for report in outcome.hypotheses:
            z = complex(report.z_real, report.z_imag)
            for item in report.items:
                check_rows.append({
                    "experiment_id": experiment_id,
                    "name": f"hypothesis {item.name} |z|={abs(z):.4g}",
                    "value": item.value,
                    "threshold": item.bound,
                    "verdict": _ITEM_VERDICT[item.status],
                    "note": item.reason,
                })
        _write_csv(self.path(CHECKS_CSV), CHECK_COLUMNS, check_rows)

        mourre_rows = [
            dict(audit.model_dump(), experiment_id=experiment_id, r=math.hypot(audit.z_real, audit.z_imag))
            for audit in outcome.mourre
        ]
        _write_csv(self.path(MOURRE_CSV), MOURRE_COLUMNS, mourre_rows)
        return [SCALING_CSV, DECAY_CSV, CHECKS_CSV, MOURRE_CSV]

    def write_plots(self, outcome: SuiteOutcome) -> List[str]:
        """gnuplot scripts with their data files under plots/"""
        written: List[str] = []
        plots = self.path(PLOTS_DIR)
        plots.mkdir(parents=True, exist_ok=True)

        for report in outcome.scaling:
            samples = [s for s in report.samples if s.norm is not None]
            if not samples:
                continue
            stem = f"scaling-{_slug(report.kind)}"
            lines = ["# r norm"] + ["%.12g %.12g" % (s.r, s.norm) for s in samples]
            (plots / f"{stem}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
            anchor = samples[0]
            script = [
                "set logscale xy",
                "set xlabel '|z|'",
                "set ylabel 'norm'",
                f"set title '{report.kind} ({report.verdict.value})'",
                f"plot '{stem}.dat' using 1:2 with linespoints title 'measured', \\",
                f"     {anchor.norm:.12g} * (x / {anchor.r:.12g}) ** ({report.predicted_exponent:.12g}) "
                f"title 'bound r^{{{report.predicted_exponent:g}}}'",
            ]
            (plots / f"{stem}.gp").write_text("\n".join(script) + "\n", encoding="utf-8")
            written += [f"{PLOTS_DIR}/{stem}.dat", f"{PLOTS_DIR}/{stem}.gp"]

        for index, report in enumerate(outcome.decay):
            names = [name for name in DECAY_SERIES if name in report.series]
            stem = f"decay-{index}-{_slug(report.label)}"
            lines = ["# t " + " ".join(names)]
            for k, t in enumerate(report.times):
                lines.append(" ".join("%.12g" % v for v in [t] + [report.series[name][k] for name in names]))
            (plots / f"{stem}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
            curves = ", \\\n     ".join(
                f"'{stem}.dat' using 1:{column + 2} with linespoints title '{name}'"
                for column, name in enumerate(names)
            )
            script = ["set logscale xy", "set xlabel 't'", f"set title '{report.label}'", f"plot {curves}"]
            (plots / f"{stem}.gp").write_text("\n".join(script) + "\n", encoding="utf-8")
            written += [f"{PLOTS_DIR}/{stem}.dat", f"{PLOTS_DIR}/{stem}.gp"]

        ray = [a for a in outcome.mourre if a.margin_ratio is not None]
        if ray:
            lines = ["# r margin_ratio"] + [
                "%.12g %.12g" % (math.hypot(a.z_real, a.z_imag), a.margin_ratio) for a in ray
            ]
            (plots / "mourre.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
            script = [
                "set logscale x",
                "set xlabel '|z|'",
                "set ylabel 'margin / |z|^2'",
                "plot 'mourre.dat' using 1:2 with linespoints title 'positivity margin', -0.05 title 'tolerance'",
            ]
            (plots / "mourre.gp").write_text("\n".join(script) + "\n", encoding="utf-8")
            written += [f"{PLOTS_DIR}/mourre.dat", f"{PLOTS_DIR}/mourre.gp"]
        logger.debug("wrote %d plot files", len(written))
        return written

    def write_record(self, record: RunRecord) -> str:
        _write_json(self.path(RUN_RECORD), record.model_dump(mode="json"))
        return RUN_RECORD

    def write_report(self, text: str) -> str:
        self.path(REPORT).write_text(text, encoding="utf-8")
        return REPORT

    def missing(self) -> List[str]:
        return [name for name in EXPECTED if not self.path(name).is_file()]

    def load(self) -> Tuple[Dict[str, Any], SuiteOutcome, RunRecord]:
        """
        Read summary.json and run_record.json back

        Raises:
            ArtifactError: If the directory lacks any expected artifact or a file is unreadable
        """
        missing = self.missing()
        if missing:
            raise ArtifactError(
                f"run directory {self.root} is missing: {', '.join(missing)}",
                context={"expected": ", ".join(EXPECTED)},
            )
        try:
            summary = json.loads(self.path(SUMMARY).read_text(encoding="utf-8"))
            outcome = SuiteOutcome.model_validate(summary["outcome"])
            record = RunRecord.model_validate_json(self.path(RUN_RECORD).read_text(encoding="utf-8"))
        except (ValueError, KeyError) as exc:
            raise ArtifactError(f"unreadable artifact in {self.root}: {exc}")
        return summary, outcome, record
