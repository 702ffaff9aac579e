"""FastAPI service wrapping the scenario runner.

Endpoints mirror the CLI subcommands: POST /keyrate (model-only),
POST /simulate (waveform Monte Carlo), POST /sweep, GET /presets.
"""
from __future__ import annotations

import dataclasses

from fastapi import FastAPI, HTTPException

from .. import harness, presets
from ..config import scenario_from_mapping
from ..errors import PonqkdError
from .models import (
    PresetInfo,
    ResultTableModel,
    ScenarioRequest,
    SweepRequest,
    SweepResponse,
)


def _table_response(table: harness.ResultTable) -> ResultTableModel:
    return ResultTableModel(
        scenario=table.scenario,
        mode=table.mode,
        seed=table.seed,
        rows=[dataclasses.asdict(r) for r in table.rows],
        per_user=table.per_user,
        network=table.network,
    )


def _scenario(req: ScenarioRequest, model_only: bool) -> harness.ScenarioConfig:
    try:
        return scenario_from_mapping(req.to_mapping(model_only))
    except PonqkdError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(
        title="ponqkd",
        description="Key-rate analysis and signal-chain simulation for a "
        "point-to-multipoint CV-QKD access network",
        version="0.1.0",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/presets", response_model=list[PresetInfo])
    def list_presets():
        out = []
        for name in presets.preset_names():
            fanout, feeder, loss = presets.CAMPAIGNS[name]
            out.append(
                PresetInfo(
                    name=name,
                    splitter_fanout=fanout,
                    feeder_length_km=feeder,
                    mean_loss_db=loss,
                    n_users=fanout,
                )
            )
        return out

    @app.post("/keyrate", response_model=ResultTableModel)
    def keyrate(req: ScenarioRequest):
        cfg = _scenario(req, model_only=True)
        try:
            return _table_response(harness.run_model_scenario(cfg))
        except PonqkdError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/simulate", response_model=ResultTableModel)
    def simulate(req: ScenarioRequest):
        cfg = _scenario(req, model_only=False)
        try:
            return _table_response(harness.run_waveform_scenario(cfg))
        except PonqkdError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(req: SweepRequest):
        cfg = _scenario(req.scenario, model_only=True)
        try:
            rows = harness.run_sweep(cfg, req.start_km, req.stop_km, req.points)
        except PonqkdError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return SweepResponse(scenario=cfg.name, rows=[dataclasses.asdict(r) for r in rows])

    return app


app = create_app()
