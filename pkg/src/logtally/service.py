"""Stateless HTTP counting service.

The service counts logs in masks that clients already segmented; it does not
run a segmentation model. Handlers share only the immutable settings, and
every request is computed in the thread pool from its own bytes.
"""
from __future__ import annotations
import time

from fastapi import FastAPI, File, Query, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from . import __version__, ledger
from .config import Settings
from .errors import LogtallyError
from .metrics import MatchParams
from .pipeline import EvalReport, PipelineConfig, evaluate_pair, run_count

JSON_MEDIA = 'application/json'


class PayloadTooLarge(Exception):
    pass


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={'error': message})


def create_app(settings: Settings | None = None) -> FastAPI:
    settings = settings or Settings()
    ledger.configure(settings.ledger_path())
    limit = settings.max_body_bytes
    match_tau = float(settings.section('match').get('coverage_tau', 0.5))
    app = FastAPI(title='logtally', version=__version__)

    @app.middleware('http')
    async def guard(request: Request, call_next):
        t0 = time.perf_counter()
        declared = request.headers.get('content-length')
        if declared and declared.isdigit() and int(declared) > limit:
            ledger.log('http_request', path=request.url.path, status=413)
            return _error(413, f'request body exceeds {limit} bytes')
        try:
            response = await call_next(request)
        except PayloadTooLarge:
            response = _error(413, f'request body exceeds {limit} bytes')
        except Exception as e:  # the server must survive handler failures
            ledger.log('http_error', path=request.url.path, error=f'{type(e).__name__}: {e}')
            response = _error(500, 'internal error')
        ledger.log('http_request', path=request.url.path, status=response.status_code,
                   ms=round((time.perf_counter() - t0) * 1000.0, 3))
        return response

    @app.exception_handler(LogtallyError)
    async def bad_input(request: Request, exc: LogtallyError):
        return _error(400, str(exc))

    @app.get('/healthz')
    async def healthz():
        return {'status': 'ok'}

    @app.post('/v1/count')
    async def count(
        request: Request,
        source: str = Query('upload'),
        min_area: int | None = Query(None, ge=0),
        connectivity: int | None = Query(None),
        counter: str | None = Query(None),
        binarize: str | None = Query(None),
        threshold: int | None = Query(None, ge=0, le=255),
        erode: int | None = Query(None, ge=0),
        dynamic_radius: float | None = Query(None, ge=0),
        timing: bool = Query(False),
    ):
        body = await request.body()
        if len(body) > limit:
            raise PayloadTooLarge()
        cfg = PipelineConfig.from_settings(
            settings, min_area=min_area, connectivity=connectivity, counter=counter,
            binarize_mode=binarize, threshold=threshold, erosion_iterations=erode,
            dynamic_radius=dynamic_radius, overlay=False,
        )
        report = await run_in_threadpool(run_count, body, cfg, source)
        return Response(content=report.to_json(include_timing=timing), media_type=JSON_MEDIA)

    @app.post('/v1/evaluate')
    async def evaluate(
        pred: UploadFile = File(...),
        gt: UploadFile = File(...),
        row_id: str = Query('upload', alias='id'),
        tau: float | None = Query(None, gt=0, le=1),
        min_area: int | None = Query(None, ge=0),
        connectivity: int | None = Query(None),
    ):
        pred_bytes = await pred.read()
        gt_bytes = await gt.read()
        if len(pred_bytes) + len(gt_bytes) > limit:
            raise PayloadTooLarge()
        cfg = PipelineConfig.from_settings(settings, min_area=min_area, connectivity=connectivity)
        match = MatchParams(tau if tau is not None else match_tau)
        row = await run_in_threadpool(evaluate_pair, pred_bytes, gt_bytes, match, cfg, row_id)
        report = EvalReport([row])
        return Response(content=report.to_json(), media_type=JSON_MEDIA)

    return app


def __getattr__(name: str):
    # ``uvicorn logtally.service:app`` builds the app lazily from the default settings
    if name == 'app':
        return create_app()
    raise AttributeError(name)
