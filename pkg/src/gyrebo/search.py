"""Two-objective Bayesian optimization over a mixed hyperparameter space.

The manager-side ask/tell loop: random initial design, then per-proposal
randomized scalarization weights and an exploration coefficient drawn from
an exponential distribution feed an upper-confidence-bound score computed
from a tree-ensemble surrogate. Acquisition is maximized over a random
candidate pool plus perturbations of the incumbent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import forest as forest_mod
from .forest import ForestConfig
from .space import SearchSpace, sample_random


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveVector:
    """Both objectives are maximized: (negative validation MSE, validation ACC)."""
    neg_mse: float
    acc: float

    def as_array(self) -> np.ndarray:
        return np.array([self.neg_mse, self.acc], dtype=np.float64)


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    objectives: Optional[ObjectiveVector]  # None for failed/stopped trials
    failure: Optional[str] = None  # reason when objectives is None
    epochs_run: int = 0
    stopper: str = "none"  # none | constant_predictor | epoch_time
    wall_seconds: float = 0.0
    seed: int = 0
    submitted: float = 0.0
    started: float = 0.0
    finished: float = 0.0

    def __post_init__(self):
        if self.objectives is None and not self.failure and self.stopper == "none":
            raise SearchError("failed trial needs a stopper or failure reason")

    @property
    def ok(self) -> bool:
        """True for runs that finished training without a stopper firing.

        Time-stopped trials keep the objectives they observed before the
        cut, but they are not comparable to full runs, so they are excluded
        from best/Pareto selection and imputed for the surrogate.
        """
        return self.objectives is not None and self.stopper == "none"

    def to_json_obj(self) -> dict:
        d = asdict(self)
        d["objectives"] = None if self.objectives is None else {
            "neg_mse": self.objectives.neg_mse, "acc": self.objectives.acc}
        return d

    @classmethod
    def from_json_obj(cls, d: dict) -> "TrialRecord":
        obj = d.get("objectives")
        objectives = None if obj is None else ObjectiveVector(obj["neg_mse"], obj["acc"])
        return cls(trial_id=d["trial_id"], config=d["config"], objectives=objectives,
                   failure=d.get("failure"), epochs_run=d.get("epochs_run", 0),
                   stopper=d.get("stopper", "none"),
                   wall_seconds=d.get("wall_seconds", 0.0), seed=d.get("seed", 0),
                   submitted=d.get("submitted", 0.0), started=d.get("started", 0.0),
                   finished=d.get("finished", 0.0))


def ucb(mu: float, sigma: float, c: float) -> float:
    """Exploration-weighted score mu + c * sigma."""
    if sigma < 0 or c < 0:
        raise SearchError("sigma and c must be nonnegative")
    return mu + c * sigma


def sample_c(rng: np.random.Generator, c_mean: float) -> float:
    """One exponential draw with the given mean."""
    if c_mean <= 0:
        raise SearchError("c_mean must be positive")
    return float(rng.exponential(c_mean))


def _normalize(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    z = np.empty_like(values, dtype=np.float64)
    for j in range(values.shape[-1]):
        if np.isfinite(span[j]) and span[j] > 0:
            z[..., j] = (values[..., j] - lo[j]) / span[j]
        else:
            z[..., j] = 0.5
    return z


def scalarize(objectives: ObjectiveVector, weights: np.ndarray,
              bounds: tuple[np.ndarray, np.ndarray],
              mode: str = "linear") -> float:
    """Collapse two objectives to one scalar (higher is better).

    Objectives are min-max normalized to [0, 1] over the observed bounds;
    a degenerate bound pins that coordinate at 0.5.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (2,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise SearchError("weights must be a nonnegative 2-vector summing to 1")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    z = _normalize(objectives.as_array(), lo, hi)
    if mode == "linear":
        return float(w @ z)
    if mode == "chebyshev":
        return float(np.min(w * z) + 0.05 * np.sum(w * z))
    raise SearchError(f"unknown scalarization mode {mode!r}")


def pareto_front(trials: list[TrialRecord]) -> list[TrialRecord]:
    """Maximal non-dominated subset (both objectives maximized), by trial_id."""
    ok = [t for t in trials if t.ok]
    front = []
    for t in ok:
        a = t.objectives.as_array()
        dominated = False
        for u in ok:
            if u is t:
                continue
            b = u.objectives.as_array()
            if np.all(b >= a) and np.any(b > a):
                dominated = True
                break
        if not dominated:
            front.append(t)
    return sorted(front, key=lambda t: t.trial_id)


def hypervolume2d(front: list[ObjectiveVector] | np.ndarray,
                  ref_point: tuple[float, float]) -> float:
    """Exact dominated area between a 2-D front and a reference point."""
    pts = np.array([[p.neg_mse, p.acc] if isinstance(p, ObjectiveVector) else list(p)
                    for p in front], dtype=np.float64)
    if pts.size == 0:
        return 0.0
    ref = np.asarray(ref_point, dtype=np.float64)
    if np.any(pts < ref):
        raise SearchError("every front point must dominate the reference point")
    # Sweep in decreasing first objective; only non-dominated points add area.
    order = np.argsort(-pts[:, 0], kind="stable")
    hv = 0.0
    top = ref[1]
    for i in order:
        x, y = pts[i]
        if y > top:
            hv += (x - ref[0]) * (y - top)
            top = y
    return hv


@dataclass
class OptimizerSettings:
    n_initial: int = 10
    candidate_pool_size: int = 2048
    n_perturb: int = 256
    perturb_sigma: float = 0.05
    c_mean: float = 1.96
    scalarization: str = "linear"
    forest: ForestConfig = field(default_factory=lambda: ForestConfig(n_trees=100))

    def __post_init__(self):
        if self.n_initial < 1:
            raise SearchError("n_initial must be >= 1")
        if self.candidate_pool_size < 1:
            raise SearchError("candidate_pool_size must be >= 1")
        if self.c_mean <= 0:
            raise SearchError("c_mean must be > 0")


class Optimizer:
    """Serialized ask/tell loop owned by a single manager thread."""

    def __init__(self, space: SearchSpace, settings: OptimizerSettings | None = None,
                 seed: int = 0):
        self.space = space
        self.settings = settings or OptimizerSettings()
        self.rng = np.random.default_rng(seed)
        self.history: list[TrialRecord] = []
        self._told_ids: set[int] = set()
        # Parallel to history: objective rows used for fitting, with
        # failed/stopped trials imputed at the componentwise worst observed
        # when they were told, so the surrogate avoids those regions.
        self._rows: list[Optional[np.ndarray]] = []
        # Every objective vector actually observed, including those of
        # time-stopped trials; defines "worst observed" for imputation.
        self._observed: list[np.ndarray] = []

    def tell(self, trial: TrialRecord) -> None:
        if trial.trial_id in self._told_ids:
            raise SearchError(f"trial_id {trial.trial_id} already told")
        self._told_ids.add(trial.trial_id)
        self.history.append(trial)
        if trial.objectives is not None:
            # Completed runs and time-stopped runs alike contribute their
            # observed objectives: a truncated run's measurement is the only
            # signal available about lr/activation/optimizer quality in
            # regions too slow to finish, and the surrogate needs it to
            # bootstrap when full runs are rare.
            self._observed.append(trial.objectives.as_array())
            self._rows.append(trial.objectives.as_array())
        elif self._observed:
            self._rows.append(np.min(np.stack(self._observed), axis=0))
        else:
            self._rows.append(None)  # nothing observed yet; skipped in fits

    def imputed_objectives(self, index: int) -> Optional[np.ndarray]:
        return self._rows[index]

    def _objective_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        keep = [(i, r) for i, r in enumerate(self._rows) if r is not None]
        X = np.stack([self.space.encode(self.history[i].config) for i, _ in keep])
        Y = np.stack([r for _, r in keep])
        return X, Y

    def _candidates(self, incumbent_enc: Optional[np.ndarray]) -> list[dict]:
        s = self.settings
        pool = [self.space.sample(self.rng) for _ in range(s.candidate_pool_size)]
        if incumbent_enc is not None and s.n_perturb > 0:
            noise = self.rng.normal(0.0, s.perturb_sigma,
                                    size=(s.n_perturb, incumbent_enc.size))
            perturbed = np.clip(incumbent_enc[None, :] + noise, 0.0, 1.0)
            pool.extend(self.space.decode(v) for v in perturbed)
        return pool

    def _propose_one(self) -> dict:
        s = self.settings
        X, Y = self._objective_matrix()
        w1 = float(self.rng.uniform())
        weights = np.array([w1, 1.0 - w1])
        c = sample_c(self.rng, s.c_mean)
        lo, hi = Y.min(axis=0), Y.max(axis=0)
        targets = np.array([
            scalarize(ObjectiveVector(*row), weights, (lo, hi), s.scalarization)
            for row in Y])
        model = forest_mod.fit(X, targets, s.forest)
        incumbent = X[int(np.argmax(targets))]
        cands = self._candidates(incumbent)
        enc = np.stack([self.space.encode(cfg) for cfg in cands])
        mu, sigma = model.predict_mean_std(enc)
        scores = mu + c * sigma
        return cands[int(np.argmax(scores))]

    def ask(self, q: int = 1) -> list[dict]:
        if q < 1:
            raise SearchError("q must be >= 1")
        n_done = len(self.history)
        n_usable = sum(1 for r in self._rows if r is not None)
        if n_done < self.settings.n_initial or n_usable == 0:
            return [self.space.sample(self.rng) for _ in range(q)]
        batch: list[dict] = []
        seen: set[str] = set()
        for _ in range(q):
            cfg = self._propose_one()
            key = json.dumps(cfg, sort_keys=True, default=str)
            if key in seen:  # one re-draw, then accept whatever comes
                cfg = self._propose_one()
                key = json.dumps(cfg, sort_keys=True, default=str)
            seen.add(key)
            batch.append(cfg)
        return batch
