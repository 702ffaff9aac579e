"""Named measurement-campaign presets.

Five splitter/distance combinations with their measured link losses as
fixed inputs (the loss budget model only backs the sweep tool), plus the
four characterized receivers whose efficiencies and mean excess noise are
cycled over larger fan-outs.  Protocol settings: 4.3 SNU modulation, 20 %
training overhead, 1 GHz symbol rate, reconciliation efficiency 0.92.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .dsp import DspConfig
from .security import NetworkTopology, ProtocolParams, UserChannelParams
from .waveform import WaveformConfig

#: detection efficiency (incl. trusted insertion loss) of the four receivers
RECEIVER_ETA = (0.71, 0.63, 0.63, 0.75)
#: mean excess noise per receiver, x and p quadratures
RECEIVER_XI_X = (0.031, 0.026, 0.031, 0.028)
RECEIVER_XI_P = (0.028, 0.020, 0.030, 0.027)
#: x/p averages used for rate evaluation
RECEIVER_XI = tuple((a + b) / 2.0 for a, b in zip(RECEIVER_XI_X, RECEIVER_XI_P))

#: per-user link loss of the 16-node campaign (dB)
LOSS_16_NODE = (15.15, 14.95, 14.62, 15.77)

#: (fanout, feeder km, measured mean loss dB) of the five configurations
CAMPAIGNS = {
    "table1-4x15": (4, 15.0, 10.9),
    "table1-4x30": (4, 30.0, 12.8),
    "table1-8x6": (8, 6.0, 11.3),
    "table1-8x15": (8, 15.0, 14.2),
    "table1-16x6": (16, 6.0, 15.1),
}

PROTOCOL = ProtocolParams(
    v_mod=4.3, beta=0.92, symbol_rate_hz=1e9, pilot_ratio=0.2, duty_cycle=1.0
)

#: desk-scale defaults: 10 MHz symbols, 8x oversampling; the DSP is rate-agnostic
DESK_WAVEFORM = WaveformConfig()
DESK_DSP = DspConfig()


@dataclass(frozen=True)
class UserTemplate:
    """Receiver-side parameters reused when users derive from a topology."""

    eta_trusted: float
    excess_noise_xi: float
    v_elec: float = 0.0


def receiver_templates() -> list:
    return [UserTemplate(e, x) for e, x in zip(RECEIVER_ETA, RECEIVER_XI)]


def users_from_losses(losses_db, fanout: int) -> list:
    """One user per splitter port; receivers cycle over the template set."""
    users = []
    for i in range(fanout):
        j = i % len(RECEIVER_ETA)
        loss = losses_db[i % len(losses_db)]
        users.append(
            UserChannelParams(
                transmittance_t=10.0 ** (-loss / 10.0),
                excess_noise_xi=RECEIVER_XI[j],
                eta_trusted=RECEIVER_ETA[j],
            )
        )
    return users


def preset_users(name: str) -> list:
    fanout, _feeder, loss = CAMPAIGNS[name]
    losses = LOSS_16_NODE if name == "table1-16x6" else (loss,)
    return users_from_losses(losses, fanout)


def preset_topology(name: str) -> NetworkTopology:
    """Sweepable topology whose port loss matches the measured mean loss."""
    fanout, feeder, loss = CAMPAIGNS[name]
    excess = loss - 0.2 * feeder - 10.0 * math.log10(fanout)
    return NetworkTopology(
        splitter_fanout=fanout,
        feeder_length_km=feeder,
        attenuation_db_per_km=0.2,
        splitter_excess_loss_db=excess,
    )


def preset_names() -> list:
    return sorted(CAMPAIGNS)
