"""Local JSON-over-HTTP service exposing the analysis workflows.

The app is a closure over one immutable :class:`StudyBundle`; request
handling is stateless and concurrent requests are safe because every
workflow is a pure function of the bundle and the request body.  Success
bodies are rendered through the same canonical JSON writer as the CLI, so
the two surfaces emit byte-identical results for identical requests.
"""
from __future__ import annotations

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import __version__
from .defaults import DEFAULT_SEED
from .filters import FilterError
from .workflows import (
    StudyBundle,
    WorkflowError,
    dag_payload,
    run_identify,
    run_match,
    run_monitor,
    run_positivity,
    run_simulate,
    schema_payload,
    to_json_bytes,
)


def _json(payload: dict) -> Response:
    return Response(content=to_json_bytes(payload),
                    media_type="application/json")


def _bad_request(err: Exception) -> JSONResponse:
    detail = {"error": str(err)}
    if isinstance(err, FilterError) and err.position is not None:
        detail["position"] = err.position
    if isinstance(err, WorkflowError) and err.details:
        detail["details"] = err.details
    return JSONResponse(status_code=400, content=detail)


def _str_field(body: dict, name: str, required: bool = False):
    value = body.get(name)
    if value is None:
        if required:
            raise WorkflowError(f"missing required field {name!r}")
        return None
    if not isinstance(value, str):
        raise WorkflowError(f"field {name!r} must be a string")
    return value


def _name_list_field(body: dict, name: str):
    value = body.get(name)
    if value is None:
        return None
    if not isinstance(value, list) or \
            not all(isinstance(v, str) for v in value):
        raise WorkflowError(f"field {name!r} must be a list of strings")
    return value


def _int_field(body: dict, name: str, default=None, minimum=None):
    value = body.get(name, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise WorkflowError(f"field {name!r} must be an integer")
    if minimum is not None and value < minimum:
        raise WorkflowError(f"field {name!r} must be >= {minimum}")
    return value


def create_app(bundle: StudyBundle) -> FastAPI:
    """Build the service over one loaded, immutable input bundle."""
    app = FastAPI(title="studypilot", version=__version__)

    @app.get("/schema")
    def get_schema():
        try:
            return _json(schema_payload(bundle.require_table().schema))
        except ValueError as err:
            return _bad_request(err)

    @app.get("/dag")
    def get_dag():
        try:
            return _json(dag_payload(bundle.require_dag()))
        except ValueError as err:
            return _bad_request(err)

    @app.post("/identify")
    async def identify(request: Request):
        body = await request.json()
        try:
            payload, _ = run_identify(
                bundle.require_dag(),
                _str_field(body, "x", required=True),
                _str_field(body, "y", required=True),
                forced=_name_list_field(body, "forced") or (),
                latent=_name_list_field(body, "latent") or (),
                max_candidates=_int_field(body, "max_candidates",
                                          default=20, minimum=1))
            return _json(payload)
        except ValueError as err:
            return _bad_request(err)

    @app.post("/positivity")
    async def positivity(request: Request):
        body = await request.json()
        try:
            payload, _ = run_positivity(
                bundle.require_table(),
                filter_text=_str_field(body, "filter"),
                treatment=_str_field(body, "treatment"),
                covariates=_name_list_field(body, "covariates"))
            return _json(payload)
        except ValueError as err:
            return _bad_request(err)

    @app.post("/match")
    async def match(request: Request):
        body = await request.json()
        try:
            caliper = body.get("caliper")
            if caliper is not None and not isinstance(caliper, (int, float)):
                raise WorkflowError("field 'caliper' must be a number")
            with_replacement = body.get("with_replacement", False)
            if not isinstance(with_replacement, bool):
                raise WorkflowError(
                    "field 'with_replacement' must be a boolean")
            payload, _ = run_match(
                bundle.require_table(),
                filter_text=_str_field(body, "filter"),
                treatment=_str_field(body, "treatment"),
                covariates=_name_list_field(body, "covariates"),
                rct_n=_int_field(body, "rct_n", minimum=1),
                caliper=None if caliper is None else float(caliper),
                ratio=_int_field(body, "ratio", default=1, minimum=1),
                with_replacement=with_replacement,
                seed=_int_field(body, "seed", default=DEFAULT_SEED))
            return _json(payload)
        except ValueError as err:
            return _bad_request(err)

    @app.post("/monitor")
    async def monitor(request: Request):
        body = await request.json()
        try:
            anonymize = body.get("anonymize", False)
            if not isinstance(anonymize, bool):
                raise WorkflowError("field 'anonymize' must be a boolean")
            payload, _ = run_monitor(
                bundle.require_table(),
                covariates=_name_list_field(body, "covariates"),
                centre=_str_field(body, "centre"),
                treatment=_str_field(body, "treatment"),
                outcome=_str_field(body, "outcome"),
                reference=_str_field(body, "reference"),
                weighting=_str_field(body, "weighting") or "beta",
                anonymize=anonymize)
            return _json(payload)
        except ValueError as err:
            return _bad_request(err)

    @app.post("/simulate")
    async def simulate(request: Request):
        body = await request.json()
        try:
            do = body.get("do")
            if do is not None and not isinstance(do, dict):
                raise WorkflowError("field 'do' must be an object")
            payload, _ = run_simulate(
                bundle.require_scm(),
                _int_field(body, "n", minimum=1) or 0,
                seed=_int_field(body, "seed", default=DEFAULT_SEED),
                do=do)
            return _json(payload)
        except ValueError as err:
            return _bad_request(err)

    return app
