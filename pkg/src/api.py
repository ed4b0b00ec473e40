from __future__ import annotations

from dotenv import load_dotenv
load_dotenv()

import os

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .models import FitnessRequest, IcRecord
from .services.data import ic_from_record, load_config
from .services.errors import InvalidInputError
from .services.fitness import covered_objectives, fitness_vector, nme
from .services.present import column_help, kp_label
from .services.sut import SyntheticSut
from .services.types import GroundTruth, Prediction

cors_origins_env = os.getenv("CORS_ORIGINS", "*")
ALLOWED_ORIGINS = ["*"] if cors_origins_env.strip() == "*" else [
    o.strip() for o in cors_origins_env.split(",") if o.strip()
]

config = load_config()
sut = SyntheticSut.from_config(config)

app = FastAPI(title="Key-point Test Generator API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=ALLOWED_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _xy(arr: np.ndarray):
    return [None if np.isnan(x) else [float(x), float(y)] for x, y in arr]


@app.get("/")
def root():
    return {"message": "Key-point test generator API is running", "docs": "/docs"}


@app.get("/health")
def health():
    return {
        "ok": True,
        "k": sut.k,
        "epsilon": config.search.epsilon,
        "model_ids": list(config.search.model_ids),
        "feasible_objectives": [kp_label(i) for i in sut.feasible_objectives()],
        "layout_path": sut.layout.path,
        "columns": column_help(["es", "ms"]),
    }


@app.post("/evaluate")
def evaluate(req: IcRecord):
    try:
        test = sut.evaluate(ic_from_record(req))
    except InvalidInputError as e:
        raise HTTPException(status_code=400, detail=str(e))

    eps = config.search.epsilon
    return {
        "ic": req.model_dump(),
        "actual": _xy(test.truth.actual),
        "predicted": _xy(test.prediction.predicted),
        "face_width": test.truth.face_width,
        "face_height": test.truth.face_height,
        "fitness": [float(f) for f in test.fitness],
        "nme": nme(test.truth, test.prediction),
        "covered": sorted(covered_objectives(test.fitness, eps)),
    }


@app.post("/fitness")
def fitness(req: FitnessRequest):
    actual = np.array([[np.nan, np.nan] if p is None else p for p in req.actual], dtype=float)
    try:
        truth = GroundTruth(actual.reshape(-1, 2), req.face_width, req.face_height)
        prediction = Prediction(np.array(req.predicted, dtype=float).reshape(-1, 2))
        ne = fitness_vector(truth, prediction)
        mean_error = nme(truth, prediction)
    except InvalidInputError as e:
        raise HTTPException(status_code=400, detail=str(e))

    return {
        "ne": [float(v) for v in ne],
        "nme": mean_error,
        "covered": sorted(covered_objectives(ne, req.epsilon)),
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=int(os.getenv("PORT", "8000")))
