"""Monte Carlo experiment driver: composes the channel, the transmission
engine and the encoding policy into reproducible sweeps.

Reproducibility contract: every run is a pure function of the experiment
spec and its master seed.  Child generators derive from
``SeedSequence(master_seed, spawn_key=(stream, trial))`` with stream 0 for
channel sample banks, 1 for engine departure draws and 2 for policy-slot
runs.  Trial seeds deliberately do not depend on the grid point, so compared
grid points consume common random numbers and monotone trends are not
drowned in Monte Carlo noise.  Outputs (CSV rows, manifests) contain no
timestamps and format floats via ``repr``, making reruns byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytics import (
    DepartureAccumulator,
    IidErrorModel,
    average_aoei,
)
from .channel import (
    CodeParams,
    InterfererSpec,
    LinkBudget,
    SHADOWING_PRESETS,
    ShadowedRicianParams,
    sample_channel_gain,
    sinr,
)
from .encoding import EncodingPolicy, PolicySimConfig, run_policy
from .errors import InvalidParameterError, ToolkitError
from .harq import HarqConfig, sample_departures

_STREAM_BANK = 0
_STREAM_ENGINE = 1
_STREAM_POLICY = 2

SWEEP_KINDS = ("snr", "gamma-th", "k", "policy", "gbs", "alpha", "imbalance")


def child_rng(master_seed: int, stream: int, *key: int) -> np.random.Generator:
    """Counter-style seed split: every (stream, key) pair is an independent,
    individually reconstructible generator."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(stream, *key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one sweep run."""

    fading: ShadowedRicianParams
    link: LinkBudget
    harq: HarqConfig
    policy: EncodingPolicy
    sweep: str
    grid: tuple
    trials: int = 8
    departures_per_trial: int = 50_000
    master_seed: int = 20_240_601
    bank_size: int = 200_000
    bt_step_prob: float = 0.2
    slots_per_trial: int = 60_000
    arrival_prob: float = 0.25
    erase_prob: float = 0.0

    def __post_init__(self):
        if self.sweep not in SWEEP_KINDS:
            raise InvalidParameterError(
                f"sweep must be one of {SWEEP_KINDS}, got {self.sweep!r}"
            )
        if not self.grid:
            raise InvalidParameterError("sweep grid must be nonempty")
        if self.trials < 1 or self.departures_per_trial < 1:
            raise InvalidParameterError("trials and departures_per_trial must be >= 1")
        if not (0.0 <= self.bt_step_prob <= 1.0):
            raise InvalidParameterError("bt_step_prob must lie in [0, 1]")

    @property
    def num_gbs(self) -> int:
        return len(self.link.interferers)

    def as_dict(self) -> dict:
        return {
            "fading": {"b": self.fading.b, "m": self.fading.m, "omega": self.fading.omega},
            "link": {
                "distance_m": self.link.distance_m,
                "freq_hz": self.link.freq_hz,
                "tx_gain": self.link.tx_gain,
                "rx_gain": self.link.rx_gain,
                "tx_power_w": self.link.tx_power_w,
                "noise_w": self.link.noise_w,
                "interferers": [
                    {
                        "distance_m": it.distance_m,
                        "power_w": it.power_w,
                        "gain": it.gain,
                        "pathloss_exp": it.pathloss_exp,
                        "ref_distance_m": it.ref_distance_m,
                    }
                    for it in self.link.interferers
                ],
            },
            "harq": {
                "max_rounds": self.harq.max_rounds,
                "mixing_rate": self.harq.mixing_rate,
                "blocklength": self.harq.code.blocklength,
                "rate": self.harq.code.rate,
                "packet_bits": self.harq.code.packet_bits,
                "snr_threshold": self.harq.snr_threshold,
            },
            "policy": {
                "decision_threshold": self.policy.decision_threshold,
                "decay": self.policy.decay,
                "feedback_delay": self.policy.feedback_delay,
            },
            "sweep": self.sweep,
            "grid": list(self.grid),
            "trials": self.trials,
            "departures_per_trial": self.departures_per_trial,
            "master_seed": self.master_seed,
            "bank_size": self.bank_size,
            "bt_step_prob": self.bt_step_prob,
            "slots_per_trial": self.slots_per_trial,
            "arrival_prob": self.arrival_prob,
            "erase_prob": self.erase_prob,
        }


@dataclass
class SweepRow:
    """One grid point: axis values, empirical age with CI, analytic overlays
    (present only where the i.i.d. reduction applies) and throughput columns."""

    axis: dict
    aoei_empirical: float = math.nan
    aoei_ci95: float = math.nan
    aoei_corrected: Optional[float] = None
    aoei_paper_literal: Optional[float] = None
    efficiency: float = math.nan
    delivery_ratio: float = math.nan
    interdeparture_mean: float = math.nan
    depth_mean: float = math.nan
    p_ff: Optional[float] = None
    strategy: str = "engine"
    error: str = ""


@dataclass
class SweepResult:
    spec: ExperimentSpec
    axis_names: tuple[str, ...]
    rows: list[SweepRow]
    violations: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Engine-lane evaluation
# ---------------------------------------------------------------------------

def _default_bank_draws(spec: ExperimentSpec, max_interferers: int):
    rng = child_rng(spec.master_seed, _STREAM_BANK, 0)
    h2 = sample_channel_gain(spec.fading, rng, spec.bank_size)
    g2 = rng.exponential(1.0, (spec.bank_size, max_interferers)) if max_interferers else None
    return h2, g2


def _threshold_eps(link: LinkBudget, gamma_th: float, h2, g2) -> float:
    g = g2[:, : len(link.interferers)] if link.interferers else None
    gam = sinr(link, h2, g)
    return float(np.mean(gam < gamma_th))


def _engine_point(
    spec: ExperimentSpec, axis: dict, p_ff: float, max_rounds: int
) -> SweepRow:
    row = SweepRow(axis=axis, p_ff=p_ff)
    if p_ff >= 1.0:
        row.error = "feedforward error probability is 1; no departures ever"
        return row
    p_bt = spec.bt_step_prob
    per_trial_age = []
    total = DepartureAccumulator()
    n = spec.departures_per_trial
    for trial in range(spec.trials):
        rng = child_rng(spec.master_seed, _STREAM_ENGINE, trial)
        uniforms = (rng.random(n), rng.random(n))
        y, _, b = sample_departures(p_ff, p_bt, max_rounds, n, uniforms=uniforms)
        acc = DepartureAccumulator()
        acc.update(y, b)
        per_trial_age.append(acc.report().aoei)
        total.merge(acc)
    rep = total.report()
    row.aoei_empirical = float(np.mean(per_trial_age))
    row.aoei_ci95 = (
        1.96 * float(np.std(per_trial_age, ddof=1)) / math.sqrt(spec.trials)
        if spec.trials > 1
        else math.nan
    )
    model = IidErrorModel(p_ff, p_bt, max_rounds)
    row.aoei_corrected = average_aoei(model, "corrected").aoei
    row.aoei_paper_literal = average_aoei(model, "paper-literal").aoei
    row.interdeparture_mean = rep.interdeparture_mean
    row.depth_mean = rep.depth_mean
    # Every slot carries one fresh update, so updates delivered per slot
    # (departures plus recovered packets over the slots spent) doubles as
    # both the efficiency and the delivery ratio of the engine lane.
    delivered = total.count + total.sum_b
    row.efficiency = delivered / total.sum_y
    row.delivery_ratio = row.efficiency
    return row


def _scaled_link(spec: ExperimentSpec, snr_db: float) -> LinkBudget:
    snr_lin = 10.0 ** (snr_db / 10.0)
    power = snr_lin * spec.link.noise_w / (spec.link.path_gain * spec.fading.mean_power)
    return replace(spec.link, tx_power_w=power)


def sweep_snr(spec: ExperimentSpec, snr_db_grid: Sequence[float]) -> SweepResult:
    """Mean-SNR axis at fixed decode threshold; the age falls as SNR rises."""
    h2, g2 = _default_bank_draws(spec, spec.num_gbs)
    rows = []
    for snr_db in snr_db_grid:
        axis = {"mean_snr_db": float(snr_db)}
        try:
            link = _scaled_link(spec, snr_db)
            p_ff = _threshold_eps(link, spec.harq.snr_threshold, h2, g2)
            rows.append(_engine_point(spec, axis, p_ff, spec.harq.max_rounds))
        except ToolkitError as exc:
            rows.append(SweepRow(axis=axis, error=str(exc)))
    res = SweepResult(spec, ("mean_snr_db",), rows)
    _check_monotone(res, "mean_snr_db", "aoei_empirical", "nonincreasing")
    _check_analytic_agreement(res)
    return res


def sweep_gamma_th(spec: ExperimentSpec, gamma_grid: Sequence[float]) -> SweepResult:
    """Decode-threshold axis at fixed SNR; the age rises with the threshold."""
    h2, g2 = _default_bank_draws(spec, spec.num_gbs)
    rows = []
    for gamma_th in gamma_grid:
        axis = {"gamma_th": float(gamma_th)}
        try:
            p_ff = _threshold_eps(spec.link, gamma_th, h2, g2)
            rows.append(_engine_point(spec, axis, p_ff, spec.harq.max_rounds))
        except ToolkitError as exc:
            rows.append(SweepRow(axis=axis, error=str(exc)))
    res = SweepResult(spec, ("gamma_th",), rows)
    _check_monotone(res, "gamma_th", "aoei_empirical", "nondecreasing")
    _check_analytic_agreement(res)
    return res


def sweep_k(spec: ExperimentSpec, k_grid: Sequence[int]) -> SweepResult:
    """Round-limit axis.

    Because discarded circles keep their slots inside the interdeparture
    time, rounds are i.i.d. across circle boundaries and the interdeparture
    law does not depend on the limit at all; the limit acts on the age only
    through the recovery depth, which can only add staleness.  The age is
    therefore nondecreasing in the limit at fixed error rate and flat at
    high SNR; published plots of this axis suggest a low-SNR benefit from
    extra rounds that the model's own closed forms rule out.
    """
    h2, g2 = _default_bank_draws(spec, spec.num_gbs)
    p_ff = _threshold_eps(spec.link, spec.harq.snr_threshold, h2, g2)
    rows = []
    for k in k_grid:
        axis = {"max_rounds": int(k)}
        try:
            rows.append(_engine_point(spec, axis, p_ff, int(k)))
        except ToolkitError as exc:
            rows.append(SweepRow(axis=axis, error=str(exc)))
    res = SweepResult(spec, ("max_rounds",), rows)
    _check_monotone(res, "max_rounds", "aoei_empirical", "nondecreasing")
    _check_analytic_agreement(res)
    return res


def _interference_rows(spec: ExperimentSpec, axis_name: str, links) -> SweepResult:
    max_m = max(len(lk.interferers) for _, lk in links)
    h2, g2 = _default_bank_draws(spec, max_m)
    rows = []
    for value, link in links:
        axis = {axis_name: value}
        try:
            p_ff = _threshold_eps(link, spec.harq.snr_threshold, h2, g2)
            rows.append(_engine_point(spec, axis, p_ff, spec.harq.max_rounds))
        except ToolkitError as exc:
            rows.append(SweepRow(axis=axis, error=str(exc)))
    return SweepResult(spec, (axis_name,), rows)


def _interferer_template(spec: ExperimentSpec) -> InterfererSpec:
    if spec.link.interferers:
        return spec.link.interferers[0]
    return InterfererSpec(distance_m=1000.0, power_w=1e-9)


def sweep_interference(
    spec: ExperimentSpec, axis: str, grid: Sequence[float]
) -> SweepResult:
    """Interference axes: interferer count, path-loss exponent, or power
    imbalance between two interferers at fixed total power.

    The age grows with the interferer count and with the imbalance ratio and
    shrinks as the path-loss exponent rises (interference decays faster);
    the published discussion of the exponent axis is self-contradictory, so
    only this model-internal direction is asserted.  The imbalance direction
    holds where the decode margin sits below the gain density's mode (the
    gain CDF is convex there, so spreading the interference hurts); past the
    mode it inverts, which the default operating point stays clear of.
    """
    template = _interferer_template(spec)
    if axis == "gbs":
        links = [
            (int(m), replace(spec.link, interferers=(template,) * int(m))) for m in grid
        ]
        res = _interference_rows(spec, "num_gbs", links)
        _check_monotone(res, "num_gbs", "aoei_empirical", "nondecreasing")
    elif axis == "alpha":
        links = [
            (
                float(a),
                replace(
                    spec.link,
                    interferers=tuple(
                        replace(it, pathloss_exp=float(a))
                        for it in (spec.link.interferers or (template, template))
                    ),
                ),
            )
            for a in grid
        ]
        res = _interference_rows(spec, "pathloss_exp", links)
        _check_monotone(res, "pathloss_exp", "aoei_empirical", "nonincreasing")
    elif axis == "imbalance":
        total = 2.0 * template.power_w
        links = []
        for delta in grid:
            d = float(delta)
            if d < 1.0:
                raise InvalidParameterError("imbalance ratio must be >= 1")
            low = total / (1.0 + d)
            pair = (
                replace(template, power_w=d * low),
                replace(template, power_w=low),
            )
            links.append((d, replace(spec.link, interferers=pair)))
        res = _interference_rows(spec, "imbalance", links)
        _check_monotone(res, "imbalance", "aoei_empirical", "nondecreasing")
    else:
        raise InvalidParameterError(
            f"interference axis must be gbs, alpha or imbalance, got {axis!r}"
        )
    _check_analytic_agreement(res)
    return res


# ---------------------------------------------------------------------------
# Policy lane
# ---------------------------------------------------------------------------

def _policy_point(
    spec: ExperimentSpec, axis: dict, policy: EncodingPolicy, strategy: str
) -> SweepRow:
    cfg = PolicySimConfig(
        slots=spec.slots_per_trial,
        policy=policy,
        rate=spec.harq.code.rate,
        arrival_prob=spec.arrival_prob,
        erase_prob=spec.erase_prob,
        strategy=strategy,
    )
    ages, effs, pdrs = [], [], []
    for trial in range(spec.trials):
        rng = child_rng(spec.master_seed, _STREAM_POLICY, trial)
        tr = run_policy(cfg, rng)
        ages.append(tr.mean_age())
        effs.append(tr.efficiency())
        pdrs.append(tr.delivery_ratio())
    row = SweepRow(axis=axis, strategy=strategy)
    row.aoei_empirical = float(np.mean(ages))
    row.aoei_ci95 = (
        1.96 * float(np.std(ages, ddof=1)) / math.sqrt(spec.trials)
        if spec.trials > 1
        else math.nan
    )
    row.efficiency = float(np.mean(effs))
    row.delivery_ratio = float(np.mean(pdrs))
    return row


def sweep_policy(
    spec: ExperimentSpec,
    phi_grid: Sequence[float],
    beta_grid: Sequence[float],
    max_workers: int = 1,
) -> SweepResult:
    """2-D policy sweep plus the retransmit-on-NACK baseline arm.

    A threshold of 1 sends every update exactly once (maximal efficiency,
    delivery ratio 1/rate); growing decay factors approach the baseline.
    Grid points are independent; ``max_workers`` > 1 farms them out to
    processes, with results merged back in grid order so the output stays
    byte-identical regardless of the worker count.
    """
    points: list[tuple[dict, EncodingPolicy, str]] = []
    for phi in phi_grid:
        for beta in beta_grid:
            points.append(
                (
                    {"phi_th": float(phi), "beta": float(beta)},
                    replace(spec.policy, decision_threshold=float(phi), decay=float(beta)),
                    "adaptive",
                )
            )
    points.append(
        (
            {"phi_th": 0.0, "beta": math.inf},
            replace(spec.policy, decision_threshold=0.0, decay=0.0),
            "baseline",
        )
    )

    def _safe(point) -> SweepRow:
        axis, policy, strategy = point
        try:
            return _policy_point(spec, axis, policy, strategy)
        except ToolkitError as exc:
            return SweepRow(axis=axis, strategy=strategy, error=str(exc))

    if max_workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows = list(
                pool.map(
                    _policy_point_safe,
                    ((spec, axis, policy, strategy) for axis, policy, strategy in points),
                )
            )
    else:
        rows = [_safe(point) for point in points]
    res = SweepResult(spec, ("phi_th", "beta"), rows)
    _check_policy_trends(res, phi_grid, beta_grid)
    return res


def _policy_point_safe(packed) -> SweepRow:
    spec, axis, policy, strategy = packed
    try:
        return _policy_point(spec, axis, policy, strategy)
    except ToolkitError as exc:
        return SweepRow(axis=axis, strategy=strategy, error=str(exc))


# ---------------------------------------------------------------------------
# Trend and consistency checks
# ---------------------------------------------------------------------------

def _pair_slack(a: SweepRow, b: SweepRow) -> float:
    ci = 0.0
    for r in (a, b):
        if not math.isnan(r.aoei_ci95):
            ci += r.aoei_ci95
    return max(1e-12, 0.25 * ci)


def _check_monotone(res: SweepResult, axis: str, column: str, direction: str) -> None:
    rows = sorted(
        (r for r in res.rows if not r.error and r.strategy != "baseline"),
        key=lambda r: r.axis[axis],
    )
    for a, b in zip(rows, rows[1:]):
        va, vb = getattr(a, column), getattr(b, column)
        slack = _pair_slack(a, b)
        bad = vb < va - slack if direction == "nondecreasing" else vb > va + slack
        if bad:
            res.violations.append(
                f"{column} not {direction} in {axis}: "
                f"{va!r} at {a.axis[axis]!r} vs {vb!r} at {b.axis[axis]!r}"
            )


def _check_analytic_agreement(res: SweepResult) -> None:
    for r in res.rows:
        if r.error or r.aoei_corrected is None:
            continue
        tol = max(0.01 * abs(r.aoei_corrected), 3.0 * (r.aoei_ci95 or 0.0))
        if abs(r.aoei_empirical - r.aoei_corrected) > tol:
            res.violations.append(
                f"analytic mismatch at {r.axis}: empirical {r.aoei_empirical!r} "
                f"vs corrected {r.aoei_corrected!r} (tol {tol!r})"
            )


def _check_policy_trends(res: SweepResult, phi_grid, beta_grid) -> None:
    adaptive = [r for r in res.rows if r.strategy == "adaptive" and not r.error]
    for beta in beta_grid:
        cut = sorted(
            (r for r in adaptive if r.axis["beta"] == float(beta)),
            key=lambda r: r.axis["phi_th"],
        )
        for a, b in zip(cut, cut[1:]):
            if b.efficiency < a.efficiency - 1e-9:
                res.violations.append(
                    f"efficiency drops with phi_th at beta={beta}: "
                    f"{a.efficiency!r} -> {b.efficiency!r}"
                )
            if b.aoei_empirical < a.aoei_empirical - _pair_slack(a, b):
                res.violations.append(
                    f"age drops with phi_th at beta={beta}: "
                    f"{a.aoei_empirical!r} -> {b.aoei_empirical!r}"
                )
    for phi in phi_grid:
        cut = sorted(
            (r for r in adaptive if r.axis["phi_th"] == float(phi)),
            key=lambda r: r.axis["beta"],
        )
        for a, b in zip(cut, cut[1:]):
            if b.aoei_empirical > a.aoei_empirical + _pair_slack(a, b):
                res.violations.append(
                    f"age grows with beta at phi_th={phi}: "
                    f"{a.aoei_empirical!r} -> {b.aoei_empirical!r}"
                )


# ---------------------------------------------------------------------------
# Dispatch and serialization
# ---------------------------------------------------------------------------

def run_experiment(spec: ExperimentSpec, max_workers: int = 1) -> SweepResult:
    """Run the sweep named by the spec over its grid.

    ``max_workers`` caps process-level parallelism; only the policy lane
    benefits (the engine lanes are vectorized and run serially).
    """
    if spec.sweep == "snr":
        return sweep_snr(spec, spec.grid)
    if spec.sweep == "gamma-th":
        return sweep_gamma_th(spec, spec.grid)
    if spec.sweep == "k":
        return sweep_k(spec, spec.grid)
    if spec.sweep == "policy":
        phi_grid, beta_grid = spec.grid
        return sweep_policy(spec, phi_grid, beta_grid, max_workers=max_workers)
    return sweep_interference(spec, spec.sweep, spec.grid)


_FIXED_COLUMNS = (
    "aoei_empirical",
    "aoei_ci95",
    "aoei_corrected",
    "aoei_paper_literal",
    "efficiency",
    "delivery_ratio",
    "interdeparture_mean",
    "depth_mean",
    "p_ff",
    "strategy",
    "error",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(result: SweepResult, path) -> None:
    """One header row naming every column, then one line per grid point."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(result.axis_names) + list(_FIXED_COLUMNS))
        for row in result.rows:
            writer.writerow(
                [_fmt(row.axis.get(a)) for a in result.axis_names]
                + [_fmt(getattr(row, col)) for col in _FIXED_COLUMNS]
            )


def write_manifest(result: SweepResult, outputs: Sequence[str], path) -> None:
    """Reproduction manifest: spec echo, seed, toolkit version, output names."""
    manifest = {
        "toolkit_version": __version__,
        "spec": result.spec.as_dict(),
        "outputs": sorted(str(o) for o in outputs),
        "violations": list(result.violations),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_spec(**overrides) -> ExperimentSpec:
    """Desk-scale defaults shared by the CLI and the test harness."""
    fading = SHADOWING_PRESETS["average"]
    link = LinkBudget(
        distance_m=600e3,
        freq_hz=2e9,
        tx_gain=100.0,
        rx_gain=10.0,
        tx_power_w=30.0,
        noise_w=1e-12,
        interferers=(InterfererSpec(distance_m=1000.0, power_w=1e-9),),
    )
    harq = HarqConfig(
        max_rounds=2,
        mixing_rate=0.3,
        code=CodeParams(blocklength=200, rate=2.0, packet_bits=100),
        snr_threshold=1.0,
    )
    policy = EncodingPolicy(decision_threshold=0.3, decay=1.0, feedback_delay=1)
    base = dict(
        fading=fading,
        link=link,
        harq=harq,
        policy=policy,
        sweep="gamma-th",
        grid=(0.5, 1.0, 2.0),
    )
    base.update(overrides)
    return ExperimentSpec(**base)
