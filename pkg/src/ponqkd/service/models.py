"""Pydantic request/response models of the HTTP service.

Requests mirror the TOML config schema one-to-one; ``to_mapping`` feeds the
same validation path the CLI uses for files.
"""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ProtocolModel(BaseModel):
    v_mod: float
    beta: float = 0.92
    symbol_rate_hz: float = 1e9
    pilot_ratio: float = 0.2
    duty_cycle: float = 1.0


class UserModel(BaseModel):
    transmittance_t: Optional[float] = None
    loss_db: Optional[float] = None
    excess_noise_xi: float = 0.0
    eta_trusted: float = 1.0
    v_elec: float = 0.0


class TopologyModel(BaseModel):
    splitter_fanout: int
    feeder_length_km: float = 0.0
    attenuation_db_per_km: float = 0.2
    splitter_excess_loss_db: float = 0.0
    drop_lengths_km: list[float] = Field(default_factory=list)


class UserTemplateModel(BaseModel):
    eta_trusted: float
    excess_noise_xi: float
    v_elec: float = 0.0


class WaveformModel(BaseModel):
    symbol_rate_hz: float = 10e6
    oversampling: int = 8
    rrc_rolloff: float = 0.3
    rrc_span_symbols: int = 16
    quantum_center_hz: float = 0.0
    pilot_shift_hz: float = 7.5e6
    if_offset_hz: float = 15.5e6
    laser_linewidth_hz: float = 10.0
    pilot_tone_power_db: float = 30.0


class DspModel(BaseModel):
    quantum_bw_hz: float = 13e6
    pilot_bw_hz: float = 200e3
    eq_taps: int = 21
    lms_step: float = 0.4
    eq_oversampling: int = 4
    superposition_count: Optional[int] = None
    max_epochs: int = 300
    guard_symbols: int = 48


class ScenarioRequest(BaseModel):
    """Inline scenario or preset reference, same shape as the TOML schema."""

    schema_version: int = 1
    preset: Optional[str] = None
    name: Optional[str] = None
    seed: int = 1
    n_frames: Optional[int] = None
    frame_symbols: Optional[int] = None
    calibration_symbols: Optional[int] = None
    protocol: Optional[ProtocolModel] = None
    users: Optional[list[UserModel]] = None
    topology: Optional[TopologyModel] = None
    user_templates: Optional[list[UserTemplateModel]] = None
    waveform: Optional[WaveformModel] = None
    dsp: Optional[DspModel] = None

    def to_mapping(self, model_only: bool) -> dict:
        out: dict = {"schema_version": self.schema_version, "seed": self.seed, "model_only": model_only}
        if self.preset is not None:
            out["preset"] = self.preset
        if self.name is not None:
            out["name"] = self.name
        for key in ("n_frames", "frame_symbols", "calibration_symbols"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        for key in ("protocol", "topology", "waveform", "dsp"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value.model_dump()
        if self.users is not None:
            out["users"] = [u.model_dump(exclude_none=True) for u in self.users]
        if self.user_templates is not None:
            out["user_templates"] = [t.model_dump() for t in self.user_templates]
        return out


class SweepRequest(BaseModel):
    scenario: ScenarioRequest
    start_km: float
    stop_km: float
    points: int = 41


class ResultRowModel(BaseModel):
    frame: int
    user: int
    snr: float
    tau_hat: float
    xi_x: float
    xi_p: float
    i_ab: float
    chi_be: float
    max_inter_bob: float
    k_bits_per_symbol: float
    skr_bps: float
    plob_bits: float
    bin_index: int
    beta: float


class ResultTableModel(BaseModel):
    scenario: str
    mode: str
    seed: int
    rows: list[ResultRowModel]
    per_user: dict[int, dict]
    network: dict


class SweepRowModel(BaseModel):
    distance_km: float
    loss_db: float
    skr_bps: float
    plob_bits: float


class SweepResponse(BaseModel):
    scenario: str
    rows: list[SweepRowModel]


class PresetInfo(BaseModel):
    name: str
    splitter_fanout: int
    feeder_length_km: float
    mean_loss_db: float
    n_users: int
