"""Scenario configuration files: TOML with nested tables, schema version 1.

A config either names a ``preset`` (optionally overriding fields) or spells
out the scenario.  Users are given explicitly as ``[[users]]`` tables
(``loss_db`` may replace ``transmittance_t``) or derived from a
``[topology]`` table plus ``[[user_templates]]``.
"""
from __future__ import annotations

import math
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib

from .dsp import DspConfig
from .errors import ScenarioConfigError
from .harness import SCHEMA_VERSION, ScenarioConfig, preset_scenario
from .presets import UserTemplate
from .security import NetworkTopology, ProtocolParams, UserChannelParams, channel_transmittance
from .waveform import WaveformConfig

_SCALAR_KEYS = ("seed", "n_frames", "frame_symbols", "calibration_symbols", "model_only", "name")


def _user_from_mapping(d: dict) -> UserChannelParams:
    d = dict(d)
    loss = d.pop("loss_db", None)
    t = d.pop("transmittance_t", None)
    if (loss is None) == (t is None):
        raise ScenarioConfigError("each user needs exactly one of transmittance_t / loss_db")
    if loss is not None:
        t = 10.0 ** (-float(loss) / 10.0)
    try:
        return UserChannelParams(transmittance_t=float(t), **d)
    except (TypeError, ValueError) as exc:
        raise ScenarioConfigError(f"bad user table: {exc}") from exc


def _build(cls, d: dict, what: str):
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ScenarioConfigError(f"bad {what} table: {exc}") from exc


def scenario_from_mapping(data: dict) -> ScenarioConfig:
    """Validate a parsed mapping and build the ScenarioConfig."""
    data = dict(data)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioConfigError(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}")

    preset = data.pop("preset", None)
    scalars = {k: data.pop(k) for k in _SCALAR_KEYS if k in data}
    protocol = data.pop("protocol", None)
    users = data.pop("users", None)
    topology = data.pop("topology", None)
    templates = data.pop("user_templates", None)
    waveform = data.pop("waveform", None)
    dsp = data.pop("dsp", None)
    if data:
        raise ScenarioConfigError(f"unknown config keys: {', '.join(sorted(data))}")

    if preset is not None:
        base = preset_scenario(preset)
        kwargs = {
            "name": scalars.get("name", base.name),
            "protocol": _build(ProtocolParams, protocol, "protocol") if protocol else base.protocol,
            "users": tuple(_user_from_mapping(u) for u in users) if users else base.users,
            "topology": _build(NetworkTopology, _topo_mapping(topology), "topology")
            if topology
            else base.topology,
            "user_templates": tuple(_build(UserTemplate, t, "user_templates") for t in templates)
            if templates
            else base.user_templates,
            "waveform": _build(WaveformConfig, waveform, "waveform") if waveform else base.waveform,
            "dsp": _build(DspConfig, dsp, "dsp") if dsp else base.dsp,
        }
        for k in ("seed", "n_frames", "frame_symbols", "calibration_symbols", "model_only"):
            kwargs[k] = scalars.get(k, getattr(base, k))
        return ScenarioConfig(**kwargs)

    if protocol is None:
        raise ScenarioConfigError("config needs a [protocol] table (or a preset)")
    proto = _build(ProtocolParams, protocol, "protocol")
    topo = _build(NetworkTopology, _topo_mapping(topology), "topology") if topology else None
    tmpl = tuple(_build(UserTemplate, t, "user_templates") for t in templates) if templates else ()
    if users:
        built_users = tuple(_user_from_mapping(u) for u in users)
    elif topo is not None and tmpl:
        built_users = tuple(
            UserChannelParams(
                transmittance_t=channel_transmittance(topo, i),
                excess_noise_xi=tmpl[i % len(tmpl)].excess_noise_xi,
                eta_trusted=tmpl[i % len(tmpl)].eta_trusted,
                v_elec=tmpl[i % len(tmpl)].v_elec,
            )
            for i in range(topo.splitter_fanout)
        )
    else:
        raise ScenarioConfigError("config needs [[users]] or [topology] plus [[user_templates]]")
    return ScenarioConfig(
        name=scalars.get("name", "scenario"),
        protocol=proto,
        users=built_users,
        topology=topo,
        user_templates=tmpl,
        waveform=_build(WaveformConfig, waveform, "waveform") if waveform else WaveformConfig(),
        dsp=_build(DspConfig, dsp, "dsp") if dsp else DspConfig(),
        seed=scalars.get("seed", 1),
        n_frames=scalars.get("n_frames", 40),
        frame_symbols=scalars.get("frame_symbols", 100_000),
        calibration_symbols=scalars.get("calibration_symbols", 25_000),
        model_only=scalars.get("model_only", True),
    )


def _topo_mapping(d: dict) -> dict:
    d = dict(d)
    if "drop_lengths_km" in d:
        d["drop_lengths_km"] = tuple(d["drop_lengths_km"])
    return d


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioConfigError(f"{path}: {exc}") from exc
    return scenario_from_mapping(data)
