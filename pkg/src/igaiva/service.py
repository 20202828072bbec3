"""HTTP facade for the four-view UI: datasets, splits, projections, error
fields, selection, synthesis, training jobs, and report comparison.

Long operations (synthesize, train) return a job id immediately; progress
is polled via GET /jobs/{id} or streamed via the server-sent event
endpoint. Mutating endpoints honor an Idempotency-Key header: a replayed
key returns the stored response instead of re-executing.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from . import classifier as clf
from . import features as feats
from .corpus import Dataset, Message, class_summary, merge_datasets, stratified_split
from .errors import DataError, GeneratorError
from .gencorpus import load_synonyms
from .heatmap import CorrectnessSample, rbf_error_field, region_from_json
from .projection import Embedding2D, fit_pca, fit_tsne, project_pca
from .synthesis import (
    GenerationParams,
    SynthesisRequest,
    make_generator,
    select_examples_by_keywords,
    select_examples_in_region,
    select_examples_random,
    synthesize,
)
from .tagtreemap import build_tag_treemap
from .workbench import DatasetCache, JobManager, RunStore, compare_experiments, create_experiment


@dataclass
class ApiSession:
    experiment_id: str | None = None
    projection: dict = field(default_factory=dict)
    heatmap: dict = field(default_factory=dict)


class AppState:
    def __init__(self, store_path: str | Path, cache_capacity: int = 20):
        self.store = RunStore(store_path)
        self._verify_store()
        self.cache = DatasetCache(self.store, capacity=cache_capacity)
        self.jobs = JobManager()
        self.session = ApiSession()
        self.tfidf_cache: dict[tuple, feats.TfidfModel] = {}
        self.embedding_cache: dict[tuple, Embedding2D] = {}
        self.idempotency: dict[str, tuple[int, bytes]] = {}
        self.lock = threading.Lock()

    def _verify_store(self) -> None:
        cache_file = self.store.root / "cache.json"
        if cache_file.exists():
            try:
                json.loads(cache_file.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise DataError(f"corrupt store: {cache_file} is not valid JSON ({exc.msg})") from exc

    # -- derived artifacts ---------------------------------------------------

    def dataset(self, name: str) -> Dataset:
        return self.cache.get(name)

    def split(self, split_id: str):
        return self.store.load_split(split_id)

    def invalidate(self, dataset_name: str) -> None:
        self.tfidf_cache = {k: v for k, v in self.tfidf_cache.items() if k[0] != dataset_name}
        self.embedding_cache = {k: v for k, v in self.embedding_cache.items() if k[0] != dataset_name}

    def features_for(self, dataset_name: str, split_id: str) -> feats.TfidfModel:
        key = (dataset_name, split_id)
        with self.lock:
            model = self.tfidf_cache.get(key)
        if model is None:
            dataset = self.dataset(dataset_name)
            split = self.split(split_id)
            train_texts = [m.text for m in dataset.messages if m.id in split.train_ids]
            model = feats.fit_tfidf(train_texts, fitted_on=f"{dataset_name}/{split_id}")
            with self.lock:
                self.tfidf_cache[key] = model
        return model

    def embedding_for(
        self,
        dataset_name: str,
        split_id: str,
        method: str,
        dims: tuple[int, int] = (0, 1),
        perplexity: float = 30.0,
        iterations: int = 1000,
        seed: int = 0,
        n_components: int = 20,
    ) -> Embedding2D:
        key = (dataset_name, split_id, method, dims, perplexity, iterations, seed, n_components)
        with self.lock:
            emb = self.embedding_cache.get(key)
        if emb is not None:
            return emb
        dataset = self.dataset(dataset_name)
        model = self.features_for(dataset_name, split_id)
        fm = feats.featurize_messages(model, dataset.messages)
        if method == "pca":
            pca = fit_pca(fm.matrix, min(n_components, len(dataset) - 1, model.dim))
            emb = project_pca(pca, fm, dims)
        elif method == "tsne":
            emb = fit_tsne(fm, perplexity=perplexity, iterations=iterations, seed=seed)
        else:
            raise DataError(f"unknown projection method {method!r}")
        with self.lock:
            self.embedding_cache[key] = emb
        return emb


def _roles(
    dataset: Dataset,
    split,
    report: clf.EvalReport | None,
    focus_class: str | None,
) -> dict[str, str]:
    roles: dict[str, str] = {}
    for m in dataset.messages:
        if focus_class is not None and m.label != focus_class:
            roles[m.id] = "other"
        elif m.origin == "synthetic":
            roles[m.id] = "synthetic"
        elif m.id in split.train_ids:
            roles[m.id] = "train"
        elif m.id in split.test_ids:
            if report is None:
                roles[m.id] = "test"
            else:
                predicted = report.predicted.get(m.id)
                roles[m.id] = "test_correct" if predicted == m.label else "test_incorrect"
        else:
            roles[m.id] = "other"
    return roles


def create_app(store_path: str | Path, cache_capacity: int = 20) -> FastAPI:
    state = AppState(store_path, cache_capacity=cache_capacity)
    app = FastAPI(title="igaiva service")
    app.state.igaiva = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state.jobs.start()

    @app.exception_handler(DataError)
    async def _data_error(_request: Request, exc: DataError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(GeneratorError)
    async def _generator_error(_request: Request, exc: GeneratorError):
        return JSONResponse(status_code=502, content={"error": str(exc)})

    @app.middleware("http")
    async def idempotency(request: Request, call_next):
        key = request.headers.get("Idempotency-Key")
        if not key or request.method != "POST":
            return await call_next(request)
        cached = state.idempotency.get(key)
        if cached is not None:
            status, body = cached
            return Response(content=body, status_code=status, media_type="application/json")
        response = await call_next(request)
        body = b""
        async for chunk in response.body_iterator:
            body += chunk
        if response.status_code < 500:
            state.idempotency[key] = (response.status_code, body)
        return Response(
            content=body,
            status_code=response.status_code,
            media_type=response.media_type,
            headers=dict(response.headers),
        )

    # -- health and datasets -------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "store": str(state.store.root)}

    @app.get("/datasets")
    def list_datasets():
        out = []
        for entry in state.cache.list():
            ds = state.store.load_dataset(entry["name"])
            summary = class_summary(ds)
            out.append(
                {
                    **entry,
                    "classes": len(summary.counts),
                    "total": summary.total,
                }
            )
        return {"datasets": out}

    @app.get("/datasets/{name}")
    def dataset_detail(name: str):
        ds = state.dataset(name)
        summary = class_summary(ds)
        return {
            "name": name,
            "classes": summary.counts,
            "total": summary.total,
            "synthetic": len(ds.synthetic_ids()),
        }

    @app.post("/datasets")
    def upload_dataset(body: dict):
        name = body.get("name")
        records = body.get("records")
        if not name or not isinstance(records, list):
            raise DataError("body must carry 'name' and a 'records' list")
        ds = Dataset(name, [Message.from_record(r) for r in records])
        origin = "synthetic" if ds.synthetic_ids() and not ds.collected_ids() else "collected"
        state.cache.put(ds, origin=origin, main=bool(body.get("main")))
        state.invalidate(name)
        summary = class_summary(ds)
        return {"name": name, "classes": len(summary.counts), "total": summary.total}

    # -- split ----------------------------------------------------------------

    @app.post("/split")
    def make_split(body: dict):
        name = body["dataset"]
        fraction = float(body.get("test_fraction", 0.2))
        seed = int(body.get("seed", 0))
        ds = state.dataset(name)
        split = stratified_split(ds, fraction, seed)
        split_id = f"split-{hashlib.sha256(f'{name}/{fraction}/{seed}'.encode()).hexdigest()[:8]}"
        state.store.save_split(split, split_id)
        per_class = {
            label: sum(1 for mid in ids if mid in split.test_ids)
            for label, ids in ds.class_index.items()
        }
        return {
            "split_id": split_id,
            "train_size": len(split.train_ids),
            "test_size": len(split.test_ids),
            "test_counts": per_class,
        }

    # -- projection and heatmap ------------------------------------------------

    def _report_for(experiment_id: str | None) -> clf.EvalReport | None:
        if not experiment_id:
            return None
        return state.store.load_report(experiment_id)

    @app.get("/projection")
    def projection(
        dataset: str,
        split: str,
        method: str = "pca",
        dims: str = "0,1",
        perplexity: float = 30.0,
        iterations: int = 1000,
        seed: int = 0,
        report: str | None = None,
        focus_class: str | None = Query(default=None, alias="class"),
    ):
        i, j = (int(p) for p in dims.split(","))
        ds = state.dataset(dataset)
        sp = state.split(split)
        emb = state.embedding_for(dataset, split, method, (i, j), perplexity, iterations, seed)
        roles = _roles(ds, sp, _report_for(report), focus_class)
        state.session.projection = {"method": method, "dims": [i, j], "perplexity": perplexity}
        return {
            "method": emb.method,
            "params": dict(emb.params),
            "ids": list(emb.ids),
            "x": [float(v) for v in emb.points[:, 0]],
            "y": [float(v) for v in emb.points[:, 1]],
            "labels": [ds.get(mid).label for mid in emb.ids],
            "roles": [roles[mid] for mid in emb.ids],
        }

    @app.get("/heatmap")
    def heatmap(
        dataset: str,
        split: str,
        report: str,
        method: str = "pca",
        dims: str = "0,1",
        perplexity: float = 30.0,
        iterations: int = 1000,
        seed: int = 0,
        epsilon: float = 0.125,
        grid_w: int = 64,
        grid_h: int = 64,
        focus_class: str | None = Query(default=None, alias="class"),
    ):
        i, j = (int(p) for p in dims.split(","))
        ds = state.dataset(dataset)
        sp = state.split(split)
        rep = state.store.load_report(report)
        emb = state.embedding_for(dataset, split, method, (i, j), perplexity, iterations, seed)
        samples = []
        for mid in sorted(sp.test_ids):
            msg = ds.get(mid)
            if focus_class is not None and msg.label != focus_class:
                continue
            x, y = emb.point_of(mid)
            samples.append(
                CorrectnessSample(id=mid, x=x, y=y, correct=rep.predicted.get(mid) == msg.label)
            )
        if not samples:
            raise DataError("no test samples available for the requested heatmap")
        fld = rbf_error_field(samples, grid=(grid_w, grid_h), epsilon=epsilon)
        state.session.heatmap = {"epsilon": epsilon, "grid": [grid_w, grid_h]}
        doc = fld.to_json()
        doc["samples"] = [
            {"id": s.id, "x": s.x, "y": s.y, "correct": s.correct} for s in samples
        ]
        return doc

    @app.get("/tagtreemap")
    def tagtreemap(
        dataset: str,
        top_k: int = 12,
        group_by: str = "class",
        split: str | None = None,
        report: str | None = None,
        focus_class: str | None = Query(default=None, alias="class"),
        line: str | None = None,  # "a,b,c" division line, groups by side
        method: str = "pca",
        dims: str = "0,1",
        stopwords: str | None = "es+en",
    ):
        ds = state.dataset(dataset)
        messages = [m for m in ds.messages if focus_class is None or m.label == focus_class]
        groups: list[tuple[str, list[Message]]]
        if group_by == "class":
            groups = [(label, [ds.get(mid) for mid in ids]) for label, ids in ds.class_index.items()]
            if focus_class is not None:
                groups = [g for g in groups if g[0] == focus_class]
        elif group_by == "split":
            if split is None:
                raise DataError("group_by=split needs a split id")
            sp = state.split(split)
            groups = [
                ("train", [m for m in messages if m.id in sp.train_ids]),
                ("test", [m for m in messages if m.id in sp.test_ids]),
            ]
        elif group_by == "correctness":
            if split is None or report is None:
                raise DataError("group_by=correctness needs split and report")
            sp = state.split(split)
            rep = state.store.load_report(report)
            test_msgs = [m for m in messages if m.id in sp.test_ids]
            groups = [
                ("correct", [m for m in test_msgs if rep.predicted.get(m.id) == m.label]),
                ("incorrect", [m for m in test_msgs if rep.predicted.get(m.id) != m.label]),
            ]
        elif group_by == "line":
            if split is None or line is None:
                raise DataError("group_by=line needs split and line=a,b,c")
            from .heatmap import DivisionLine, partition_by_line

            a, b, c = (float(p) for p in line.split(","))
            i, j = (int(p) for p in dims.split(","))
            emb = state.embedding_for(dataset, split, method, (i, j))
            pts = [(m.id, *emb.point_of(m.id)) for m in messages]
            side_a, side_b, _ = partition_by_line(pts, DivisionLine(a, b, c))
            in_a, in_b = set(side_a), set(side_b)
            groups = [
                ("side_A", [m for m in messages if m.id in in_a]),
                ("side_B", [m for m in messages if m.id in in_b]),
            ]
        else:
            raise DataError(f"unknown group_by {group_by!r}")
        layout = build_tag_treemap(groups, top_k=top_k, stopwords=stopwords)
        return layout.to_json()

    # -- selection --------------------------------------------------------------

    @app.post("/select")
    def select(body: dict):
        ds = state.dataset(body["dataset"])
        sp = state.split(body["split"])
        mode = body.get("mode", "region")
        if mode == "region":
            proj = body.get("projection", {})
            emb = state.embedding_for(
                body["dataset"],
                body["split"],
                proj.get("method", "pca"),
                tuple(proj.get("dims", (0, 1))),
                float(proj.get("perplexity", 30.0)),
                int(proj.get("iterations", 1000)),
                int(proj.get("seed", 0)),
            )
            region = region_from_json(body["region"])
            ids = select_examples_in_region(ds, sp.train_ids, emb, region, body.get("class"))
        elif mode == "keywords":
            ids = select_examples_by_keywords(
                ds, sp.train_ids, body["class"], body.get("terms", [])
            )
        elif mode == "random":
            ids = select_examples_random(
                ds, sp.train_ids, body["class"], int(body["n"]), int(body.get("seed", 0))
            )
        else:
            raise DataError(f"unknown selection mode {mode!r}")
        leaked = set(ids) & sp.test_ids
        if leaked:  # defense in depth at the API boundary
            raise DataError("selection produced test ids; refusing to answer")
        return {"mode": mode, "count": len(ids), "ids": sorted(ids)}

    # -- synthesis ----------------------------------------------------------------

    @app.post("/synthesize")
    def synthesize_endpoint(body: dict):
        ds = state.dataset(body["dataset"])
        sp = state.split(body["split"])
        params_doc = dict(body.get("params", {}))
        if "k" in body:
            params_doc["per_example_count"] = int(body["k"])
        request = SynthesisRequest(
            target_label=body["target_label"],
            example_ids=tuple(body["example_ids"]),
            params=GenerationParams.from_json(params_doc),
            generator=body.get("generator", "mock"),
            run_id=body.get("batch_id") or f"batch-{uuid.uuid4().hex[:8]}",
            seed=int(body.get("seed", 0)),
        )
        request.validate_against_split(sp.train_ids)
        synonyms = None
        if body.get("synonyms"):
            synonyms = load_synonyms(body["synonyms"])
        generator = make_generator(request.generator, synonyms=synonyms)
        batch_id = request.run_id

        def job_body(job):
            def progress(done: int, total: int) -> None:
                job.emit(progress=min(1.0, done / max(total, 1)), generated=done)

            batch = synthesize(request, ds, generator=generator, on_progress=progress)
            state.store.save_batch(batch, batch_id)
            batch_ds = Dataset(batch_id, batch.messages)
            state.cache.put(batch_ds, origin="synthetic")
            job.emit(progress=1.0, generated=len(batch.messages), rejected=len(batch.rejected))

        job = state.jobs.submit("synthesize", job_body)
        return {"job": job.id, "batch_id": batch_id}

    # -- merge ----------------------------------------------------------------------

    @app.post("/merge")
    def merge(body: dict):
        base = state.dataset(body["base"])
        additions = [state.dataset(name) for name in body.get("additions", [])]
        name = body.get("name") or f"{body['base']}+merged"
        merged = merge_datasets(base, additions, name=name)
        state.cache.put(merged, origin="collected" if not additions else "merged")
        state.invalidate(name)
        summary = class_summary(merged)
        return {"name": name, "total": summary.total, "classes": len(summary.counts)}

    # -- training and experiments ------------------------------------------------------

    @app.post("/train")
    def train_endpoint(body: dict):
        ds = state.dataset(body["dataset"])
        split_id = body["split"]
        sp = state.split(split_id)
        config = clf.TrainConfig.from_json(body["config"]) if body.get("config") else clf.TrainConfig()
        exp, job = create_experiment(
            state.store,
            ds,
            sp,
            list(body.get("additions", [])),
            config,
            state.jobs,
            split_id=split_id,
            baseline_experiment=body.get("baseline"),
            notes=body.get("notes", ""),
        )
        state.session.experiment_id = exp.id
        return {"experiment": exp.id, "job": job.id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        return state.jobs.job_status(job_id).to_json()

    @app.get("/jobs/{job_id}/events")
    async def job_events(job_id: str):
        job = state.jobs.job_status(job_id)

        async def stream():
            sent = 0
            while True:
                events = list(job.events)
                for event in events[sent:]:
                    yield f"data: {json.dumps(event)}\n\n"
                sent = len(events)
                if job.state in ("done", "failed"):
                    yield f"data: {json.dumps({'state': job.state, 'progress': job.progress, 'error': job.error})}\n\n"
                    return
                await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/reports")
    def reports():
        out = []
        for exp_id in state.store.list_experiments():
            from .workbench import load_experiment

            exp = load_experiment(state.store, exp_id)
            entry = {"experiment": exp_id, "status": exp.status, "additions": list(exp.additions)}
            if exp.status == "trained":
                report = state.store.load_report(exp_id)
                entry["overall_recall"] = report.overall_recall
                entry["timestamp"] = report.timestamp
            out.append(entry)
        return {"reports": out}

    @app.get("/reports/compare")
    def reports_compare(ids: str):
        exp_ids = [p for p in ids.split(",") if p]
        baseline, deltas = compare_experiments(state.store, exp_ids)
        return {
            "baseline": baseline.to_json(),
            "deltas": [d.to_json() for d in deltas],
            "markdown": clf.compare_markdown(baseline, deltas),
        }

    @app.get("/reports/{experiment_id}")
    def report_detail(experiment_id: str):
        report = state.store.load_report(experiment_id)
        return report.to_json()

    @app.get("/session")
    def session():
        return {
            "experiment_id": state.session.experiment_id,
            "projection": state.session.projection,
            "heatmap": state.session.heatmap,
        }

    ui_dir = Path(__file__).resolve().parents[2] / "frontend"
    if (ui_dir / "index.html").is_file() and (ui_dir / "dist").is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(port: int, store_path: str | Path, host: str = "127.0.0.1") -> None:
    """Run the service until interrupted (blocking)."""
    import uvicorn

    app = create_app(store_path)
    uvicorn.run(app, host=host, port=port, log_level="warning")
