"""HTTP API: upload a leaf photo, get its severity report; jobs persist on disk."""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, File, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from leafsev import __version__
from leafsev.errors import DecodeError, EmptyMaskError, FormatError
from leafsev.raster import decode_image, encode_png
from leafsev.severity import QuantConfig, annotate, quantify_detailed

log = logging.getLogger(__name__)

DONE = "DONE"
FAILED = "FAILED"


@dataclass
class JobRecord:
    job_id: str
    received_at: str
    image_path: str
    image_sha256: str
    config: dict
    status: str
    report: dict | None = None
    error: str | None = None

    def to_dict(self):
        return asdict(self)


def _extension(raw: bytes) -> str:
    if raw.startswith(b"\x89PNG"):
        return "png"
    if raw.startswith(b"\xff\xd8"):
        return "jpg"
    if raw.startswith(b"P6"):
        return "ppm"
    return "bin"


class JobStore:
    """One directory per job under ``root``; the in-memory index is rebuilt at start-up."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index: dict[str, Path] = {}
        for rec_path in sorted(self.root.glob("*/job.json")):
            try:
                job_id = json.loads(rec_path.read_text())["job_id"]
            except (OSError, ValueError, KeyError):
                log.warning("skipping unreadable job record %s", rec_path)
                continue
            self._index[job_id] = rec_path

    def __len__(self):
        return len(self._index)

    def new_job_dir(self, job_id: str) -> Path:
        d = self.root / job_id
        d.mkdir(parents=True, exist_ok=False)
        return d

    def save(self, record: JobRecord):
        path = self.root / record.job_id / "job.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record.to_dict(), indent=2))
        tmp.replace(path)
        with self._lock:
            self._index[record.job_id] = path

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            path = self._index.get(job_id)
        if path is None:
            return None
        return json.loads(path.read_text())


def _config_from_query(params) -> QuantConfig:
    known = {"mode", "k", "seed", "iters"}
    unknown = set(params) - known
    if unknown:
        raise ValueError(f"unknown query parameter(s): {', '.join(sorted(unknown))}")
    try:
        k = int(params.get("k", 5))
        seed = int(params.get("seed", 0))
        iters = int(params.get("iters", 5))
    except ValueError as exc:
        raise ValueError(f"k, seed and iters must be integers: {exc}") from None
    return QuantConfig(color_mode=params.get("mode", "value"), k=k, iterations=iters, seed=seed)


def _process(store, job_dir: Path, record: JobRecord, raw: bytes, cfg: QuantConfig, name):
    try:
        m = quantify_detailed(decode_image(raw), cfg, name=name)
    except (DecodeError, FormatError, EmptyMaskError) as exc:
        record.status, record.error = FAILED, f"{type(exc).__name__}: {exc}"
        store.save(record)
        return None
    (job_dir / "report.json").write_text(m.report.to_json(indent=2))
    (job_dir / "annotated.png").write_bytes(encode_png(annotate(m.image, m.disease_mask)))
    record.status, record.report = DONE, m.report.to_dict()
    store.save(record)
    return m.report


def create_app(data_dir="data", max_body=20 * 1024 * 1024, workers=2) -> FastAPI:
    store = JobStore(data_dir)
    pool = ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="leafsev-job")

    @asynccontextmanager
    async def lifespan(app):
        yield
        pool.shutdown(wait=True)

    app = FastAPI(title="leafsev", version=__version__, lifespan=lifespan)
    app.state.store = store

    @app.middleware("http")
    async def limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and length.isdigit() and int(length) > max_body:
            return JSONResponse({"detail": f"request body exceeds {max_body} bytes"}, status_code=413)
        return await call_next(request)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, exc):
        return JSONResponse({"detail": exc.errors()}, status_code=400)

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/v1/quantify")
    async def post_quantify(request: Request, image: UploadFile = File(...)):
        try:
            cfg = _config_from_query(request.query_params)
        except ValueError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        raw = await image.read()
        if len(raw) > max_body:
            return JSONResponse({"detail": f"upload exceeds {max_body} bytes"}, status_code=413)
        job_id = str(uuid.uuid4())
        job_dir = store.new_job_dir(job_id)
        stored = job_dir / f"original.{_extension(raw)}"
        stored.write_bytes(raw)
        record = JobRecord(
            job_id=job_id,
            received_at=datetime.now(timezone.utc).isoformat(),
            image_path=str(stored.relative_to(store.root)),
            image_sha256=hashlib.sha256(raw).hexdigest(),
            config=cfg.to_dict(),
            status=FAILED,
        )
        loop = asyncio.get_running_loop()
        report = await loop.run_in_executor(
            pool, _process, store, job_dir, record, raw, cfg, image.filename
        )
        if report is None:
            return JSONResponse({"detail": record.error, "job_id": job_id}, status_code=422)
        body = report.to_dict()
        body["job_id"] = job_id
        return JSONResponse(body, headers={"X-Job-Id": job_id})

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        rec = store.get(job_id)
        if rec is None:
            return JSONResponse({"detail": f"no job {job_id}"}, status_code=404)
        return rec

    return app
