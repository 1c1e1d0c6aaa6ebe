"""Stateless controller micro-service.

Exposes one MPC solve per POST /solve over HTTP with keep-alive. All state
travels in the request (measured plant state, committed inputs over the dead
time, setpoint, period), so any number of service replicas are
interchangeable and requests may be retried or reordered freely.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .mpc import MpcSpec, horizon, mpc_step
from .plant import ball_and_beam

PROTOCOL_VERSION = "1"


@dataclass(frozen=True)
class ServiceConfig:
    """Controller parameterization the service is deployed with."""

    k_v: float = 10.0
    k_u: float = 1.5
    h_q: float = 0.005
    h_d_min: float = 0.005
    h_d_max: float = 0.5
    mpc: MpcSpec = field(default_factory=lambda: MpcSpec(u_min=-10.0, u_max=10.0))

    def hash(self) -> str:
        blob = json.dumps({
            "k_v": self.k_v, "k_u": self.k_u, "h_q": self.h_q,
            "h_d_min": self.h_d_min, "h_d_max": self.h_d_max,
            "mpc": list(self.mpc.key()),
        }, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class SolveRequestWire(BaseModel):
    """One controller invocation. Field units: seconds, meters, radians."""

    version: str
    k: int = Field(ge=0, description="base-tick sample index of the state")
    x: list[float] = Field(min_length=3, max_length=3)
    setpoint: float
    h_d: float = Field(gt=0.0, description="control period the plan is for")
    pending_inputs: list[float] = Field(
        default_factory=list,
        description="inputs already committed for the dead-time ticks")

    @field_validator("x", "pending_inputs")
    @classmethod
    def _finite(cls, v):
        if not all(math.isfinite(f) for f in v):
            raise ValueError("values must be finite")
        return v

    @field_validator("setpoint", "h_d")
    @classmethod
    def _finite_scalar(cls, v):
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v


class SolveResponseWire(BaseModel):
    version: str
    k: int
    h_d: float
    u_seq: list[float]
    x_pred: list[list[float]]
    iterations: int
    tau_c: float
    degraded: bool
    status: str


def create_app(cfg: ServiceConfig | None = None) -> FastAPI:
    cfg = cfg or ServiceConfig()
    model_c = ball_and_beam(k_v=cfg.k_v, k_u=cfg.k_u)
    app = FastAPI(title="controller service", version=__version__)
    app.state.ready = False
    app.state.config = cfg

    @app.exception_handler(RequestValidationError)
    async def _bad_body(request, exc):
        # malformed bodies are the client's bug, not an out-of-range value
        fields = [".".join(str(p) for p in e["loc"] if p != "body")
                  for e in exc.errors()]
        return JSONResponse(status_code=400, content={
            "error": "malformed request", "fields": fields})

    @app.on_event("startup")
    async def _warmup():
        # first solves trigger jit compilation and structure caching; do it
        # before reporting healthy so request latency is representative
        for h_d in (cfg.h_d_min, 0.03, cfg.h_d_max):
            mpc_step(np.zeros(3), [], h_d, np.zeros(3), cfg.mpc, model_c,
                     cfg.h_q)
        app.state.ready = True

    @app.get("/healthz")
    async def healthz():
        if not app.state.ready:
            return JSONResponse(status_code=503,
                                content={"status": "starting"})
        return {"status": "ok", "version": __version__,
                "protocol": PROTOCOL_VERSION, "config_hash": cfg.hash()}

    @app.post("/solve", response_model=SolveResponseWire)
    async def solve(req: SolveRequestWire):
        if req.version != PROTOCOL_VERSION:
            return JSONResponse(status_code=400, content={
                "error": f"unsupported protocol version {req.version!r}",
                "fields": ["version"]})
        if not (cfg.h_d_min <= req.h_d <= cfg.h_d_max):
            return JSONResponse(status_code=422, content={
                "error": f"h_d {req.h_d} outside "
                         f"[{cfg.h_d_min}, {cfg.h_d_max}]",
                "fields": ["h_d"]})
        t0 = time.perf_counter()
        res = mpc_step(np.asarray(req.x), req.pending_inputs, req.h_d,
                       np.array([req.setpoint, 0.0, 0.0]), cfg.mpc, model_c,
                       cfg.h_q, k=req.k)
        tau_c = time.perf_counter() - t0
        n_expected = horizon(cfg.mpc.N_c, req.h_d)
        if len(res.u_seq) != n_expected:  # pragma: no cover
            return JSONResponse(status_code=500, content={
                "error": "internal invariant breach: plan length "
                         f"{len(res.u_seq)} != {n_expected}"})
        return SolveResponseWire(
            version=PROTOCOL_VERSION, k=req.k, h_d=req.h_d,
            u_seq=[float(u) for u in res.u_seq],
            x_pred=[[float(v) for v in row] for row in res.x_pred],
            iterations=res.iterations, tau_c=tau_c,
            degraded=res.degraded, status=res.status)

    return app


def serve(port: int, cfg: ServiceConfig | None = None, host: str = "127.0.0.1"):
    """Run the service in the foreground (blocking)."""
    import uvicorn
    uvicorn.run(create_app(cfg), host=host, port=port, log_level="warning")
