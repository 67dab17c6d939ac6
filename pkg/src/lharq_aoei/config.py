"""Run-configuration files: flat sectioned key-value text, strictly checked.

Every physical quantity carries its unit in the key name (``tx_power_dbm``,
``freq_hz``, ``snr_threshold_db``); dB values are converted to linear here
and nowhere else.  Unknown sections or keys are rejected rather than
ignored, so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .channel import (
    CodeParams,
    InterfererSpec,
    LinkBudget,
    SHADOWING_PRESETS,
    ShadowedRicianParams,
    db_to_linear,
    dbm_to_watts,
)
from .encoding import EncodingPolicy
from .errors import ConfigError, ToolkitError
from .harness import SWEEP_KINDS, ExperimentSpec, default_spec
from .harq import HarqConfig

_KNOWN_KEYS = {
    "channel": {"preset", "b", "m", "omega"},
    "link": {
        "distance_m",
        "freq_hz",
        "tx_gain_dbi",
        "rx_gain_dbi",
        "tx_power_dbm",
        "noise_dbm",
    },
    "interferer": {
        "distance_m",
        "power_dbm",
        "gain_dbi",
        "pathloss_exp",
        "ref_distance_m",
    },
    "harq": {
        "max_rounds",
        "mixing_rate",
        "blocklength",
        "rate_bpcu",
        "packet_bits",
        "snr_threshold_db",
    },
    "policy": {"decision_threshold", "decay", "feedback_delay_slots"},
    "sim": {
        "trials",
        "departures_per_trial",
        "slots_per_trial",
        "arrival_prob",
        "erase_prob",
        "master_seed",
        "bank_size",
        "bt_step_prob",
    },
    "sweep": {"kind", "grid", "phi_grid", "beta_grid"},
}


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}: {exc}") from None


def _get(section, key, conv, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r} in [{section.name}]")
        return default
    try:
        return conv(section[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r} in [{section.name}]: {exc}") from None


def _check_keys(parser: configparser.ConfigParser) -> None:
    for name in parser.sections():
        base = "interferer" if name.startswith("interferer.") else name
        if base not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        for key in parser[name]:
            if key not in _KNOWN_KEYS[base]:
                raise ConfigError(f"unknown key {key!r} in section [{name}]")


def load_config(path) -> ExperimentSpec:
    """Parse and validate a run configuration into an experiment spec.

    Violations of cross-parameter invariants (for instance a mixing rate at
    or above the coding rate) surface as :class:`ConfigError` with the
    constraint spelled out.
    """
    try:
        return _load(path)
    except ConfigError:
        raise
    except ToolkitError as exc:
        raise ConfigError(str(exc)) from exc


def _load(path) -> ExperimentSpec:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not read:
        raise ConfigError(f"config file not found: {path}")
    _check_keys(parser)
    defaults = default_spec()

    if "channel" in parser:
        sec = parser["channel"]
        if "preset" in sec:
            name = sec["preset"].strip()
            if name not in SHADOWING_PRESETS:
                raise ConfigError(
                    f"unknown shadowing preset {name!r}; "
                    f"choose from {sorted(SHADOWING_PRESETS)}"
                )
            if any(k in sec for k in ("b", "m", "omega")):
                raise ConfigError("give either preset or explicit b/m/omega, not both")
            fading = SHADOWING_PRESETS[name]
        else:
            fading = ShadowedRicianParams(
                b=_get(sec, "b", float),
                m=_get(sec, "m", float),
                omega=_get(sec, "omega", float),
            )
    else:
        fading = defaults.fading

    interferers = []
    for name in sorted(s for s in parser.sections() if s.startswith("interferer.")):
        sec = parser[name]
        interferers.append(
            InterfererSpec(
                distance_m=_get(sec, "distance_m", float),
                power_w=dbm_to_watts(_get(sec, "power_dbm", float)),
                gain=db_to_linear(_get(sec, "gain_dbi", float, 0.0)),
                pathloss_exp=_get(sec, "pathloss_exp", float, 3.0),
                ref_distance_m=_get(sec, "ref_distance_m", float, 100.0),
            )
        )

    if "link" in parser:
        sec = parser["link"]
        link = LinkBudget(
            distance_m=_get(sec, "distance_m", float),
            freq_hz=_get(sec, "freq_hz", float),
            tx_gain=db_to_linear(_get(sec, "tx_gain_dbi", float)),
            rx_gain=db_to_linear(_get(sec, "rx_gain_dbi", float)),
            tx_power_w=dbm_to_watts(_get(sec, "tx_power_dbm", float)),
            noise_w=dbm_to_watts(_get(sec, "noise_dbm", float)),
            interferers=tuple(interferers),
        )
    else:
        link = (
            defaults.link
            if not interferers
            else LinkBudget(
                distance_m=defaults.link.distance_m,
                freq_hz=defaults.link.freq_hz,
                tx_gain=defaults.link.tx_gain,
                rx_gain=defaults.link.rx_gain,
                tx_power_w=defaults.link.tx_power_w,
                noise_w=defaults.link.noise_w,
                interferers=tuple(interferers),
            )
        )

    if "harq" in parser:
        sec = parser["harq"]
        harq = HarqConfig(
            max_rounds=_get(sec, "max_rounds", int),
            mixing_rate=_get(sec, "mixing_rate", float),
            code=CodeParams(
                blocklength=_get(sec, "blocklength", int, defaults.harq.code.blocklength),
                rate=_get(sec, "rate_bpcu", float, defaults.harq.code.rate),
                packet_bits=_get(sec, "packet_bits", int, defaults.harq.code.packet_bits),
            ),
            snr_threshold=db_to_linear(_get(sec, "snr_threshold_db", float, 0.0)),
        )
    else:
        harq = defaults.harq

    if "policy" in parser:
        sec = parser["policy"]
        policy = EncodingPolicy(
            decision_threshold=_get(sec, "decision_threshold", float),
            decay=_get(sec, "decay", float),
            feedback_delay=_get(sec, "feedback_delay_slots", int, 1),
        )
    else:
        policy = defaults.policy

    sim_kwargs = {}
    if "sim" in parser:
        sec = parser["sim"]
        for key, conv in (
            ("trials", int),
            ("departures_per_trial", int),
            ("slots_per_trial", int),
            ("arrival_prob", float),
            ("erase_prob", float),
            ("master_seed", int),
            ("bank_size", int),
            ("bt_step_prob", float),
        ):
            if key in sec:
                sim_kwargs[key] = conv(sec[key])

    if "sweep" not in parser:
        raise ConfigError("config must define a [sweep] section")
    sweep_sec = parser["sweep"]
    kind = _get(sweep_sec, "kind", str).strip()
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"sweep kind must be one of {SWEEP_KINDS}, got {kind!r}")
    if kind == "policy":
        phi_grid = _floats(_get(sweep_sec, "phi_grid", str))
        beta_grid = _floats(_get(sweep_sec, "beta_grid", str))
        if not phi_grid or not beta_grid:
            raise ConfigError("policy sweep needs nonempty phi_grid and beta_grid")
        for phi in phi_grid:
            if not (0.0 <= phi <= 1.0):
                raise ConfigError(f"phi_grid values must lie in [0, 1], got {phi}")
        grid = (phi_grid, beta_grid)
    else:
        grid = _floats(_get(sweep_sec, "grid", str))
        if kind in ("k", "gbs"):
            bad = [v for v in grid if v != int(v) or v < (1 if kind == "k" else 0)]
            if bad:
                raise ConfigError(f"{kind} grid must hold nonnegative integers, got {bad}")
            grid = tuple(int(v) for v in grid)

    return ExperimentSpec(
        fading=fading,
        link=link,
        harq=harq,
        policy=policy,
        sweep=kind,
        grid=grid,
        **sim_kwargs,
    )
