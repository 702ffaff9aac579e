"""Config-driven scenario runner: model-only rates, waveform Monte Carlo, sweeps.

A scenario bundles protocol, per-user channels and (for waveform runs)
the sampling configuration.  Outputs are deterministic byte-for-byte for a
fixed (config, seed) pair: rows are emitted in sorted order and floats are
written with round-trip repr.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import estimation, presets
from .dsp import DspConfig, demodulate_frame
from .errors import ScenarioConfigError, SnrOutOfRangeError
from .gaussian import CovarianceMatrix
from .security import (
    NetworkTopology,
    ProtocolParams,
    UserChannelParams,
    build_ptmp_covariance,
    channel_transmittance,
    plob_bound,
    secret_key_rate,
)
from .waveform import (
    FrameLayout,
    WaveformConfig,
    apply_channel,
    build_frame,
    gate_calibration_frames,
    generate_gaussian_symbols,
    rrc_shape_and_shift,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one named experiment."""

    name: str
    protocol: ProtocolParams
    users: tuple
    topology: NetworkTopology | None = None
    user_templates: tuple = ()
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    seed: int = 1
    n_frames: int = 40
    frame_symbols: int = 100_000
    calibration_symbols: int = 25_000
    model_only: bool = True

    def __post_init__(self):
        if not self.users:
            raise ScenarioConfigError("scenario needs at least one user")
        if self.topology is not None and len(self.users) != self.topology.splitter_fanout:
            raise ScenarioConfigError(
                f"user count {len(self.users)} does not match splitter fan-out "
                f"{self.topology.splitter_fanout}"
            )
        if self.n_frames < 1 or self.frame_symbols < 1:
            raise ScenarioConfigError("n_frames and frame_symbols must be >= 1")


@dataclass(frozen=True)
class ResultRow:
    """One user in one frame (model runs use frame = 0)."""

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


@dataclass(frozen=True)
class ResultTable:
    scenario: str
    mode: str
    seed: int
    rows: tuple
    per_user: dict
    network: dict

    def user_mean_skr(self, user: int) -> float:
        return self.per_user[user]["mean_skr_bps"]

    @property
    def mean_skr_bps(self) -> float:
        return float(np.mean([u["mean_skr_bps"] for u in self.per_user.values()]))


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    loss_db: float
    skr_bps: float
    plob_bits: float


CSV_COLUMNS = (
    "frame,user,snr,tau_hat,xi_x,xi_p,i_ab,chi_be,max_inter_bob,"
    "k_bits_per_symbol,skr_bps,plob_bits,bin_index,beta"
)


def model_snr(p: ProtocolParams, user: UserChannelParams) -> float:
    """Heterodyne SNR of the model channel: (tau/2) v_mod / (1 + (tau/2) xi)."""
    tau_het = user.tau / 2.0
    return tau_het * p.v_mod / (1.0 + tau_het * user.excess_noise_xi)


def _classify(snr: float) -> int:
    try:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return estimation.snr_classify(snr).bin_index
    except SnrOutOfRangeError:
        return 0


def _finalize(scenario, mode, seed, rows, network) -> ResultTable:
    rows = tuple(sorted(rows, key=lambda r: (r.frame, r.user)))
    per_user = {}
    for u in sorted({r.user for r in rows}):
        mine = [r for r in rows if r.user == u]
        per_user[u] = {
            "mean_skr_bps": float(np.mean([r.skr_bps for r in mine])),
            "mean_snr": float(np.mean([r.snr for r in mine])),
            "mean_xi_x": float(np.mean([r.xi_x for r in mine])),
            "mean_xi_p": float(np.mean([r.xi_p for r in mine])),
            "min_xi": float(np.min([min(r.xi_x, r.xi_p) for r in mine])),
            "max_xi": float(np.max([max(r.xi_x, r.xi_p) for r in mine])),
            "mean_chi_be": float(np.mean([r.chi_be for r in mine])),
            "n_frames": len(mine),
        }
    return ResultTable(scenario, mode, seed, rows, per_user, network)


def _rates_rows(cfg: ScenarioConfig, users, estimates, frame: int):
    """Security evaluation on a parametric matrix built from (injected or
    estimated) per-user parameters; one ResultRow per user."""
    gamma = build_ptmp_covariance(cfg.protocol, users)
    rows = []
    for u, user in enumerate(users):
        rate = secret_key_rate(gamma, u, cfg.protocol)
        est = estimates[u]
        snr = est["snr"]
        rows.append(
            ResultRow(
                frame=frame,
                user=u,
                snr=snr,
                tau_hat=est["tau_hat"],
                xi_x=est["xi_x"],
                xi_p=est["xi_p"],
                i_ab=rate.i_ab,
                chi_be=rate.chi_be,
                max_inter_bob=rate.max_inter_bob,
                k_bits_per_symbol=rate.k_bits_per_symbol,
                skr_bps=rate.skr_bps,
                plob_bits=plob_bound(est["channel_t"]),
                bin_index=_classify(snr),
                beta=cfg.protocol.beta,
            )
        )
    return rows, gamma


def run_model_scenario(cfg: ScenarioConfig) -> ResultTable:
    """Evaluate the scenario directly on the model covariance matrix."""
    estimates = []
    for user in cfg.users:
        estimates.append(
            {
                "snr": model_snr(cfg.protocol, user),
                "tau_hat": user.tau / 2.0,
                "xi_x": user.excess_noise_xi,
                "xi_p": user.excess_noise_xi,
                "channel_t": user.transmittance_t,
            }
        )
    rows, gamma = _rates_rows(cfg, list(cfg.users), estimates, frame=0)
    network = _network_diagnostics(rows, gamma, cfg)
    return _finalize(cfg.name, "model", cfg.seed, rows, network)


def _network_diagnostics(rows, gamma: CovarianceMatrix, cfg: ScenarioConfig) -> dict:
    from .security import inter_user_mutual_info

    n = len(cfg.users)
    pairwise = [
        inter_user_mutual_info(gamma, i, j) for i in range(n) for j in range(n) if i != j
    ]
    return {
        "n_users": n,
        "min_chi_be": float(np.min([r.chi_be for r in rows])),
        "max_inter_bob": float(np.max(pairwise)) if pairwise else 0.0,
        "all_holevo_limited": bool(all(r.chi_be >= r.max_inter_bob for r in rows)),
        "mean_skr_bps": float(np.mean([r.skr_bps for r in rows])),
    }


def _frame_layout(cfg: ScenarioConfig) -> FrameLayout:
    return FrameLayout(cfg.frame_symbols, cfg.protocol.pilot_ratio)


def simulate_frame(cfg: ScenarioConfig, frame: int, root_seq: np.random.SeedSequence):
    """One tx -> channel -> rx -> estimation pass for every user.

    The transmitted frame is shared across users (downstream broadcast);
    each user gets an independent channel noise stream.  Returns
    (per-user ChannelEstimate list, aligned normalized data, alice symbols).
    """
    layout = _frame_layout(cfg)
    wcfg = cfg.waveform
    children = root_seq.spawn(len(cfg.users) + 1)
    tx_rng = np.random.default_rng(children[0])

    symbols = generate_gaussian_symbols(layout.n_quantum, cfg.protocol.v_mod, tx_rng)
    frame_syms = build_frame(symbols, layout)
    wave = rrc_shape_and_shift(frame_syms, wcfg)
    sym0 = wave.meta["symbol0_sample"]
    cal_span = (0, sym0 + cfg.calibration_symbols * wcfg.oversampling)
    gated = gate_calibration_frames(wave, [cal_span])

    pilot_modulus = math.sqrt(2.0 * cfg.protocol.v_mod)
    ests, user_data, common = [], [], None
    for u, user in enumerate(cfg.users):
        rng = np.random.default_rng(children[u + 1])
        rx = apply_channel(gated, user, wcfg, rng, layout=layout)
        rs = demodulate_frame(rx, wcfg, layout, cfg.dsp, pilot_modulus, frame)
        cal_mask = rs.is_gated & ~rs.is_guard
        cal = estimation.calibrate_snu(
            rs.x[cal_mask],
            rs.p[cal_mask],
            frame,
            tx_reference=frame_syms[cal_mask],
        )
        idx, qx, qp = rs.quantum_clean()
        nx, np_ = estimation.normalize(qx, qp, cal, frame)
        est = estimation.estimate_channel(frame_syms[idx], nx, np_, cfg.protocol.v_mod, frame)
        ests.append(est)
        user_data.append((idx, nx, np_))
        common = idx if common is None else np.intersect1d(common, idx, assume_unique=True)

    aligned = []
    for idx, nx, np_ in user_data:
        sel = np.searchsorted(idx, common)
        aligned.append((nx[sel], np_[sel]))
    return ests, aligned, frame_syms[common]


def run_waveform_scenario(cfg: ScenarioConfig) -> ResultTable:
    """Monte Carlo of the full signal chain; rates from per-frame estimates."""
    root = np.random.SeedSequence(cfg.seed)
    frame_seqs = root.spawn(cfg.n_frames)
    rows = []
    frame_estimates = []
    pooled_alice, pooled_users = [], [[] for _ in cfg.users]
    gamma = None
    for frame in range(cfg.n_frames):
        ests, aligned, alice = simulate_frame(cfg, frame, frame_seqs[frame])
        frame_estimates.append(ests)
        pooled_alice.append(alice)
        for u, (nx, np_) in enumerate(aligned):
            pooled_users[u].append((nx, np_))
        eff_users = []
        est_rows = []
        for u, est in enumerate(ests):
            eff_users.append(
                UserChannelParams(
                    transmittance_t=min(2.0 * est.tau_hat, 1.0),
                    excess_noise_xi=max(est.xi_hat, 0.0),
                )
            )
            est_rows.append(
                {
                    "snr": est.snr(cfg.protocol.v_mod),
                    "tau_hat": est.tau_hat,
                    "xi_x": est.xi_x,
                    "xi_p": est.xi_p,
                    "channel_t": cfg.users[u].transmittance_t,
                }
            )
        frame_rows, gamma = _rates_rows(cfg, eff_users, est_rows, frame)
        rows.extend(frame_rows)

    network = _network_diagnostics([r for r in rows if r.frame == cfg.n_frames - 1], gamma, cfg)
    alice_all = np.concatenate(pooled_alice)
    users_all = [
        (np.concatenate([a for a, _ in chunks]), np.concatenate([b for _, b in chunks]))
        for chunks in pooled_users
    ]
    try:
        emp = estimation.estimate_joint_covariance(alice_all, users_all, cfg.protocol)
        network["empirical_matrix_modes"] = emp.modes
        network["empirical_nu_min"] = float(np.min(emp._spectrum))
    except estimation.UnphysicalEstimateError as exc:  # pragma: no cover
        network["empirical_matrix_error"] = str(exc)
    xi_stats = estimation.excess_noise_statistics(
        [e for frame_list in frame_estimates for e in frame_list]
    )
    network["xi_mean_x"] = xi_stats.mean_x
    network["xi_mean_p"] = xi_stats.mean_p
    return _finalize(cfg.name, "waveform", cfg.seed, rows, network)


def run_scenario(cfg: ScenarioConfig) -> ResultTable:
    return run_model_scenario(cfg) if cfg.model_only else run_waveform_scenario(cfg)


def run_sweep(cfg: ScenarioConfig, start_km: float, stop_km: float, points: int):
    """Model-only feeder-length sweep over the scenario topology."""
    if cfg.topology is None:
        raise ScenarioConfigError("sweep needs a scenario with a topology")
    if points < 2 or stop_km <= start_km:
        raise ScenarioConfigError("need points >= 2 and stop_km > start_km")
    templates = cfg.user_templates or tuple(
        presets.UserTemplate(u.eta_trusted, u.excess_noise_xi, u.v_elec) for u in cfg.users
    )
    out = []
    for d in np.linspace(start_km, stop_km, points):
        topo = replace(cfg.topology, feeder_length_km=float(d))
        users = []
        for i in range(topo.splitter_fanout):
            t = templates[i % len(templates)]
            users.append(
                UserChannelParams(
                    transmittance_t=channel_transmittance(topo, i),
                    excess_noise_xi=t.excess_noise_xi,
                    eta_trusted=t.eta_trusted,
                    v_elec=t.v_elec,
                )
            )
        gamma = build_ptmp_covariance(cfg.protocol, users)
        skrs = [secret_key_rate(gamma, u, cfg.protocol).skr_bps for u in range(len(users))]
        t_chan = users[0].transmittance_t
        out.append(
            SweepRow(
                distance_km=float(d),
                loss_db=-10.0 * math.log10(t_chan),
                skr_bps=float(np.mean(skrs)),
                plob_bits=plob_bound(t_chan),
            )
        )
    return out


def preset_scenario(name: str, *, seed: int = 1, model_only: bool = True, **overrides) -> ScenarioConfig:
    """Build a ScenarioConfig for one of the named presets."""
    if name not in presets.CAMPAIGNS:
        raise ScenarioConfigError(f"unknown preset {name!r}; known: {', '.join(presets.preset_names())}")
    return ScenarioConfig(
        name=name,
        protocol=presets.PROTOCOL,
        users=tuple(presets.preset_users(name)),
        topology=presets.preset_topology(name),
        user_templates=tuple(presets.receiver_templates()),
        waveform=presets.DESK_WAVEFORM,
        dsp=presets.DESK_DSP,
        seed=seed,
        model_only=model_only,
        **overrides,
    )


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def emit_outputs(table: ResultTable, out_dir, formats=("csv", "summary"), sweep_rows=None) -> list:
    """Write results.csv / summary.txt (and sweep.csv when given); returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / "results.csv"
        with path.open("w") as fh:
            fh.write(CSV_COLUMNS + "\n")
            for r in table.rows:
                fh.write(
                    ",".join(
                        _fmt(v)
                        for v in (
                            r.frame,
                            r.user,
                            r.snr,
                            r.tau_hat,
                            r.xi_x,
                            r.xi_p,
                            r.i_ab,
                            r.chi_be,
                            r.max_inter_bob,
                            r.k_bits_per_symbol,
                            r.skr_bps,
                            r.plob_bits,
                            r.bin_index,
                            r.beta,
                        )
                    )
                    + "\n"
                )
        written.append(path)
    if "summary" in formats:
        path = out_dir / "summary.txt"
        lines = [
            f"schema_version = {SCHEMA_VERSION}",
            f'scenario = "{table.scenario}"',
            f'mode = "{table.mode}"',
            f"seed = {table.seed}",
            "",
            "[network]",
        ]
        for k in sorted(table.network):
            v = table.network[k]
            lines.append(f"{k} = {_fmt(v).lower() if isinstance(v, bool) else _fmt(v)}")
        for u in sorted(table.per_user):
            lines.append("")
            lines.append(f"[user_{u}]")
            for k in sorted(table.per_user[u]):
                lines.append(f"{k} = {_fmt(table.per_user[u][k])}")
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    if sweep_rows is not None:
        path = out_dir / "sweep.csv"
        with path.open("w") as fh:
            fh.write("distance_km,loss_db,skr_bps,plob_bits\n")
            for r in sweep_rows:
                fh.write(f"{_fmt(r.distance_km)},{_fmt(r.loss_db)},{_fmt(r.skr_bps)},{_fmt(r.plob_bits)}\n")
        written.append(path)
    return written
