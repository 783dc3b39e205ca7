"""Sweep the closed-form estimate against the numerical oracle and score it in dB."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .closed_form import cff_combined, cff_generalized, cff_incoherent
from .model import fiber_from_engineering, link_from_engineering, spectrum_from_engineering
from .oracle import Domain, OracleConfig, gn_numeric_domains

CSV_COLUMNS = (
    "loss_db_per_km", "span_km", "n_spans", "gnli_cff_w_per_hz", "gnli_oracle_w_per_hz",
    "error_db", "branch", "cond1_lhs", "cond2_lhs", "exp_neg_2aL", "oracle_converged",
    "oracle_rel_tol_achieved",
)


def default_losses() -> tuple:
    return tuple(float(v) for v in np.logspace(math.log10(5e-4), math.log10(0.3), 24))


@dataclass(frozen=True)
class SweepGrid:
    loss_db_per_km: tuple = field(default_factory=default_losses)
    span_lengths_km: tuple = (0.1, 1.0, 10.0, 100.0, 1000.0)
    n_spans: tuple = (1, 10)
    gamma_per_w_km: float = 1.2
    beta2_ps2_per_km: float = -21.0
    bandwidth_thz: float = 5.0
    psd_w_per_thz: float = 1.0

    def __post_init__(self):
        for name in ("loss_db_per_km", "span_lengths_km", "n_spans"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"grid field {name} must be non-empty")
            object.__setattr__(self, name, values)
        # construct every point once so bad values fail before any integration
        for loss in self.loss_db_per_km:
            fiber_from_engineering(loss, self.beta2_ps2_per_km, self.gamma_per_w_km)
        for span in self.span_lengths_km:
            for n in self.n_spans:
                link_from_engineering(span, n)
        spectrum_from_engineering(self.bandwidth_thz, self.psd_w_per_thz)

    def points(self):
        """Grid points in report order: span length, then span count, then loss."""
        for span in self.span_lengths_km:
            for n in self.n_spans:
                for loss in self.loss_db_per_km:
                    yield loss, span, n

    def __len__(self):
        return len(self.loss_db_per_km) * len(self.span_lengths_km) * len(self.n_spans)


@dataclass(frozen=True)
class ValidationRow:
    loss_db_per_km: float
    span_km: float
    n_spans: int
    cff_psd: float
    oracle_psd: float
    error_db: float
    branch: str
    cond1_lhs: float
    cond1_holds: bool
    cond2_lhs: float
    cond2_holds: bool
    exp_neg_2aL: float
    oracle_domain: str
    oracle_converged: bool
    oracle_rel_tol_achieved: float
    oracle_evals: int
    incoherent_psd: float
    generalized_psd: float
    square_psd: float
    lozenge_psd: float

    @property
    def point(self) -> tuple:
        return (self.loss_db_per_km, self.span_km, self.n_spans)


def error_db(cff: float, oracle: float) -> float:
    """Closed-form error relative to the oracle, ``10 log10(cff/oracle)``."""
    if not (cff > 0.0 and oracle > 0.0):
        raise ValueError(f"error_db needs positive PSDs, got cff={cff!r}, oracle={oracle!r}")
    return 10.0 * math.log10(cff / oracle)


def evaluate_point(loss_db_per_km: float, span_km: float, n_spans: int, grid: SweepGrid,
                   config: OracleConfig) -> ValidationRow:
    fiber = fiber_from_engineering(loss_db_per_km, grid.beta2_ps2_per_km, grid.gamma_per_w_km)
    link = link_from_engineering(span_km, n_spans)
    spectrum = spectrum_from_engineering(grid.bandwidth_thz, grid.psd_w_per_thz)
    combined = cff_combined(fiber, link, spectrum)
    oracle = gn_numeric_domains(fiber, link, spectrum, config)
    main = oracle[config.domain]
    v = combined.validity
    err = error_db(combined.psd, main.psd) if main.psd > 0.0 else math.nan
    return ValidationRow(
        loss_db_per_km=loss_db_per_km, span_km=span_km, n_spans=n_spans,
        cff_psd=combined.psd, oracle_psd=main.psd, error_db=err,
        branch=combined.branch.value,
        cond1_lhs=v.cond1_lhs, cond1_holds=v.cond1_holds,
        cond2_lhs=v.cond2_lhs, cond2_holds=v.cond2_holds, exp_neg_2aL=v.exp_neg_2aL,
        oracle_domain=config.domain.value, oracle_converged=main.quad.converged,
        oracle_rel_tol_achieved=main.quad.rel_err, oracle_evals=main.quad.n_evals,
        incoherent_psd=cff_incoherent(fiber, link, spectrum).psd,
        generalized_psd=cff_generalized(fiber, link, spectrum).psd,
        square_psd=oracle[Domain.SQUARE].psd, lozenge_psd=oracle[Domain.LOZENGE].psd,
    )


def _evaluate_packed(args):
    return evaluate_point(*args)


def run_sweep(grid: SweepGrid, config: OracleConfig = OracleConfig(), workers: int = 1,
              progress: Optional[Callable[[ValidationRow], None]] = None) -> list:
    """One :class:`ValidationRow` per grid point, in :meth:`SweepGrid.points` order.

    Points are independent; with ``workers > 1`` they are spread over
    processes and collected back in grid order, so the output does not depend
    on the worker count.
    """
    jobs = [(loss, span, n, grid, config) for loss, span, n in grid.points()]
    rows = []
    if workers <= 1:
        results = map(_evaluate_packed, jobs)
        for row in results:
            rows.append(row)
            if progress:
                progress(row)
        return rows
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for row in pool.map(_evaluate_packed, jobs):
            rows.append(row)
            if progress:
                progress(row)
    return rows


@dataclass
class AcceptanceSummary:
    passed: bool
    threshold_db: float
    n_rows: int
    n_converged: int
    n_over_threshold: int
    worst: Optional[dict]
    abs_error_quantiles: dict
    histogram: dict
    max_oracle_rel_tol: float
    guard_db: float
    robust: bool
    nonconverged: list

    def to_dict(self) -> dict:
        return asdict(self)


def _tol_db(rel: float) -> float:
    return 10.0 * math.log10(1.0 + rel) if math.isfinite(rel) else math.inf


def check_acceptance(rows: Sequence[ValidationRow], threshold_db: float = 0.5) -> AcceptanceSummary:
    """Pass iff every converged row has ``|error_db| <= threshold_db``.

    ``guard_db`` is the worst ``|error_db|`` plus the oracle tolerance at that
    row (in dB); ``robust`` says whether the pass survives that guard.
    """
    if not rows:
        raise ValueError("check_acceptance needs at least one row")
    ok = [r.oracle_converged and math.isfinite(r.error_db) for r in rows]
    converged = [r for r, good in zip(rows, ok) if good]
    nonconverged = [list(r.point) for r, good in zip(rows, ok) if not good]
    over = [r for r in converged if abs(r.error_db) > threshold_db]
    worst = max(converged, key=lambda r: abs(r.error_db), default=None)
    errs = np.array([abs(r.error_db) for r in converged]) if converged else np.array([math.nan])
    qs = {f"q{int(q * 100):02d}": float(np.quantile(errs, q)) for q in (0.0, 0.5, 0.9, 0.99, 1.0)}
    edges = np.arange(-1.0, 1.0001, 0.1)
    signed = np.clip([r.error_db for r in converged], -1.0, 1.0)
    counts, _ = np.histogram(signed, bins=edges)
    histogram = {f"[{lo:+.1f},{hi:+.1f})": int(c) for lo, hi, c in zip(edges[:-1], edges[1:], counts)}
    max_rel = max((r.oracle_rel_tol_achieved for r in converged), default=math.nan)
    if worst is not None:
        guard = abs(worst.error_db) + _tol_db(worst.oracle_rel_tol_achieved)
        worst_info = {"loss_db_per_km": worst.loss_db_per_km, "span_km": worst.span_km,
                      "n_spans": worst.n_spans, "error_db": worst.error_db,
                      "branch": worst.branch}
    else:
        guard, worst_info = math.nan, None
    passed = bool(converged) and not over
    return AcceptanceSummary(
        passed=passed, threshold_db=threshold_db, n_rows=len(rows), n_converged=len(converged),
        n_over_threshold=len(over), worst=worst_info, abs_error_quantiles=qs,
        histogram=histogram, max_oracle_rel_tol=max_rel, guard_db=guard,
        robust=passed and guard <= threshold_db, nonconverged=nonconverged,
    )


def _fmt_psd(v: float) -> str:
    return f"{v:.17g}"


def _fmt_coord(v: float) -> str:
    # shortest string that round-trips, so grid inputs read back as typed
    return repr(float(v))


def format_report_csv(rows: Iterable[ValidationRow], preamble: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in preamble:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([
            _fmt_coord(r.loss_db_per_km), _fmt_coord(r.span_km), r.n_spans,
            _fmt_psd(r.cff_psd), _fmt_psd(r.oracle_psd), f"{r.error_db:.6f}", r.branch,
            f"{r.cond1_lhs:.17g}", f"{r.cond2_lhs:.17g}", f"{r.exp_neg_2aL:.17g}",
            "true" if r.oracle_converged else "false", f"{r.oracle_rel_tol_achieved:.3e}",
        ])
    return buf.getvalue()


def write_report_csv(rows: Sequence[ValidationRow], path: Path, preamble: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.write_text(format_report_csv(rows, preamble), encoding="utf-8")
    return path


def plot_file_name(span_km: float, n_spans: int) -> str:
    return f"error_span{span_km:g}km_n{n_spans}.dat"


def write_plot_files(rows: Sequence[ValidationRow], out_dir: Path,
                     preamble: Sequence[str] = ()) -> list:
    """One two-column file (loss_db_per_km, error_db) per (span length, span count)."""
    out_dir = Path(out_dir)
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.span_km, r.n_spans), []).append(r)
    paths = []
    for (span, n), group in groups.items():
        lines = [f"# {line}" for line in preamble]
        lines.append(f"# span_km={span:g} n_spans={n}")
        lines.append("# loss_db_per_km error_db")
        for r in sorted(group, key=lambda r: r.loss_db_per_km):
            lines.append(f"{_fmt_coord(r.loss_db_per_km)} {r.error_db:.6f}")
        p = out_dir / plot_file_name(span, n)
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(p)
    return paths
