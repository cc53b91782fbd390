"""Synthetic wind-driven ocean ensemble on a disk-masked square grid.

Each simulation advects and diffuses two tracer fields (salinity- and
temperature-analogs) in the classic time-dependent double-gyre velocity
field, with the diffusivity parameter kappa varying across ensemble
members. Frames are recorded once per model day as (T, H, W, 5) arrays
with channels [tracer1, tracer2, u, v, kappa]; everything outside the
circular basin is exactly zero.

Advection uses conservative first-order upwind fluxes and diffusion uses
central fluxes, both with zero flux through the basin boundary, so tracer
mass inside the basin is conserved up to roundoff.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

CHANNELS = ("tracer1", "tracer2", "u", "v", "kappa")

GYRE_EPS = 0.25  # gyre asymmetry amplitude of the classic double-gyre flow


class OceanError(ValueError):
    pass


class CflError(OceanError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_sims: int = 12
    timesteps_out: int = 10  # daily frames, including day 0
    grid: int = 32
    kappa_range: tuple[float, float] = (200.0, 2000.0)
    kappa_nd_range: tuple[float, float] = (5e-4, 5e-3)
    substeps_per_day: int = 0  # 0 = choose automatically from the CFL bound
    gyre_amplitude: float = 0.1
    gyre_period: float = 10.0  # days
    seed: int = 0

    def __post_init__(self):
        if self.n_sims < 1:
            raise OceanError("n_sims must be >= 1")
        if self.grid < 8:
            raise OceanError("grid must be >= 8")
        if self.kappa_range[0] >= self.kappa_range[1]:
            raise OceanError("kappa_range lo must be < hi")
        if self.timesteps_out < 1:
            raise OceanError("timesteps_out must be >= 1")


@dataclass
class SimulationEnsemble:
    states: np.ndarray  # (n_sims, T, H, W, 5) float32
    kappas: np.ndarray  # (n_sims,)
    mask: np.ndarray    # (H, W) bool disk
    gen: GenConfig

    @property
    def n_sims(self) -> int:
        return self.states.shape[0]

    @property
    def timesteps(self) -> int:
        return self.states.shape[1]


def basin_mask(grid: int) -> np.ndarray:
    ys = (np.arange(grid) + 0.5) / grid
    xs = (np.arange(grid) + 0.5) / grid
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return (xx - 0.5) ** 2 + (yy - 0.5) ** 2 <= 0.45**2


def kappa_nondim(kappa: float, gen: GenConfig) -> float:
    lo, hi = gen.kappa_range
    nlo, nhi = gen.kappa_nd_range
    return nlo + (kappa - lo) / (hi - lo) * (nhi - nlo)


def _velocity(grid: int, t: float, gen: GenConfig):
    """Analytic double-gyre velocity at cell centers, time in days."""
    a = GYRE_EPS * np.sin(2 * np.pi * t / gen.gyre_period)
    xs = (np.arange(grid) + 0.5) / grid
    ys = (np.arange(grid) + 0.5) / grid
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    f = a * xx**2 + (1 - 2 * a) * xx
    fx = 2 * a * xx + (1 - 2 * a)
    A = gen.gyre_amplitude
    u = -A * np.pi * np.sin(np.pi * f) * np.cos(np.pi * yy)
    v = A * np.pi * np.cos(np.pi * f) * np.sin(np.pi * yy) * fx
    return u, v


def _initial_tracers(grid: int, rng: np.random.Generator):
    xs = (np.arange(grid) + 0.5) / grid
    ys = (np.arange(grid) + 0.5) / grid
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    phase = rng.uniform(0, 2 * np.pi, size=4)
    t1 = 1.0 + 0.5 * np.sin(2 * np.pi * xx + phase[0]) * np.sin(np.pi * yy)
    t1 += 0.25 * np.cos(2 * np.pi * (xx + yy) + phase[1])
    t2 = np.exp(-((xx - 0.35) ** 2 + (yy - 0.6) ** 2) / 0.04)
    t2 += 0.3 * np.sin(3 * np.pi * xx + phase[2]) * np.cos(2 * np.pi * yy + phase[3])
    return t1, t2


def _max_speed_bound(gen: GenConfig) -> float:
    return gen.gyre_amplitude * np.pi * (1 + 2 * GYRE_EPS)


def required_substeps(gen: GenConfig) -> int:
    """Smallest substep count satisfying both CFL bounds for one day."""
    dx = 1.0 / gen.grid
    umax = _max_speed_bound(gen)
    kmax = max(kappa_nondim(gen.kappa_range[1], gen), 0.0)
    n_adv = int(np.ceil(umax / (0.9 * dx))) if umax > 0 else 1
    n_dif = int(np.ceil(2 * kmax / (0.25 * dx * dx))) if kmax > 0 else 1
    return max(n_adv, n_dif, 1)


def _check_cfl(gen: GenConfig, dt: float):
    dx = 1.0 / gen.grid
    umax = _max_speed_bound(gen)
    if dt * umax / dx > 0.9:
        raise CflError(
            f"advection CFL violated: dt*|u|max/dx = {dt * umax / dx:.3f} > 0.9; "
            f"increase substeps_per_day")
    kmax = max(kappa_nondim(gen.kappa_range[1], gen), 0.0)
    if dt * kmax / dx**2 > 0.25:
        raise CflError(
            f"diffusion CFL violated: dt*kappa/dx^2 = {dt * kmax / dx**2:.3f}"
            " > 0.25; increase substeps_per_day")


def _step_tracer(c, u, v, mask, kappa_nd, dt, dx):
    """One explicit substep: upwind advection + central diffusion.

    Fluxes through faces touching an out-of-basin cell are zero, so the
    basin behaves as a rigid no-flux boundary.
    """
    inner = mask
    # Face velocities (east/north faces of each cell), upwind tracer choice.
    ue = 0.5 * (u + np.roll(u, -1, axis=1))
    vn = 0.5 * (v + np.roll(v, -1, axis=0))
    c_east = np.roll(c, -1, axis=1)
    c_north = np.roll(c, -1, axis=0)
    flux_e = np.where(ue > 0, ue * c, ue * c_east)
    flux_n = np.where(vn > 0, vn * c, vn * c_north)
    open_e = inner & np.roll(inner, -1, axis=1)
    open_n = inner & np.roll(inner, -1, axis=0)
    flux_e = np.where(open_e, flux_e, 0.0)
    flux_n = np.where(open_n, flux_n, 0.0)
    div = (flux_e - np.roll(flux_e, 1, axis=1)
           + flux_n - np.roll(flux_n, 1, axis=0)) / dx

    dif_e = np.where(open_e, kappa_nd * (c_east - c) / dx, 0.0)
    dif_n = np.where(open_n, kappa_nd * (c_north - c) / dx, 0.0)
    lap = (dif_e - np.roll(dif_e, 1, axis=1)
           + dif_n - np.roll(dif_n, 1, axis=0)) / dx

    out = c + dt * (lap - div)
    return np.where(inner, out, 0.0)


def simulate_one(gen: GenConfig, kappa: float, rng: np.random.Generator
                 ) -> np.ndarray:
    """(T, H, W, 5) float64 frames for a single ensemble member."""
    grid = gen.grid
    substeps = gen.substeps_per_day or required_substeps(gen)
    dt = 1.0 / substeps
    _check_cfl(gen, dt)
    dx = 1.0 / grid
    mask = basin_mask(grid)
    k_nd = kappa_nondim(kappa, gen)
    t1, t2 = _initial_tracers(grid, rng)
    t1 = np.where(mask, t1, 0.0)
    t2 = np.where(mask, t2, 0.0)

    frames = np.zeros((gen.timesteps_out, grid, grid, 5))
    day = 0.0
    for ti in range(gen.timesteps_out):
        u, v = _velocity(grid, day, gen)
        u = np.where(mask, u, 0.0)
        v = np.where(mask, v, 0.0)
        frames[ti, :, :, 0] = t1
        frames[ti, :, :, 1] = t2
        frames[ti, :, :, 2] = u
        frames[ti, :, :, 3] = v
        frames[ti, :, :, 4] = np.where(mask, kappa, 0.0)
        if ti == gen.timesteps_out - 1:
            break
        for s in range(substeps):
            tsub = day + s * dt
            u, v = _velocity(grid, tsub, gen)
            u = np.where(mask, u, 0.0)
            v = np.where(mask, v, 0.0)
            t1 = _step_tracer(t1, u, v, mask, k_nd, dt, dx)
            t2 = _step_tracer(t2, u, v, mask, k_nd, dt, dx)
        day += 1.0
    if not np.all(np.isfinite(frames)):
        raise OceanError("non-finite values in generated frames")
    return frames


def generate_ensemble(gen: GenConfig) -> SimulationEnsemble:
    root = np.random.SeedSequence(gen.seed)
    kappa_rng = np.random.default_rng(root.spawn(1)[0])
    lo, hi = gen.kappa_range
    kappas = kappa_rng.uniform(lo, hi, size=gen.n_sims)
    sim_seeds = root.spawn(gen.n_sims + 1)[1:]
    states = np.zeros((gen.n_sims, gen.timesteps_out, gen.grid, gen.grid, 5),
                      dtype=np.float32)
    for i in range(gen.n_sims):
        frames = simulate_one(gen, float(kappas[i]),
                              np.random.default_rng(sim_seeds[i]))
        states[i] = frames.astype(np.float32)
    return SimulationEnsemble(states=states, kappas=kappas,
                              mask=basin_mask(gen.grid), gen=gen)


# ---------------------------------------------------------------------------
# pairing / splitting / normalization

@dataclass
class NormStats:
    mean: np.ndarray        # (4,) state-channel means over in-basin pixels
    std: np.ndarray         # (4,)
    kappa_lo: float
    kappa_hi: float
    passthrough: np.ndarray  # (4,) bool, channels left unscaled (zero std)


@dataclass
class PairedDataset:
    inputs: np.ndarray    # (N, 5, H, W) channel-first
    targets: np.ndarray   # (N, 4, H, W)
    sim_index: np.ndarray  # (N,)
    kappas: np.ndarray     # per pair
    mask: np.ndarray       # (H, W) bool
    split_of_sim: dict[int, str] = field(default_factory=dict)
    stats: NormStats | None = None
    climatology: np.ndarray | None = None  # (4, H, W) of normalized targets
    normalized: bool = False

    def indices(self, split: str) -> np.ndarray:
        sims = [s for s, tag in self.split_of_sim.items() if tag == split]
        return np.nonzero(np.isin(self.sim_index, sims))[0]

    def subset(self, split: str):
        idx = self.indices(split)
        return self.inputs[idx], self.targets[idx]


def make_pairs(ensemble: SimulationEnsemble) -> PairedDataset:
    T = ensemble.timesteps
    if T < 2:
        raise OceanError("need at least 2 frames per simulation to pair")
    n, _, H, W, C = ensemble.states.shape
    states = ensemble.states.astype(np.float64)
    inputs = states[:, :-1].transpose(0, 1, 4, 2, 3).reshape(n * (T - 1), C, H, W)
    targets = states[:, 1:, :, :, :4].transpose(0, 1, 4, 2, 3).reshape(
        n * (T - 1), 4, H, W)
    sim_index = np.repeat(np.arange(n), T - 1)
    kappas = np.repeat(ensemble.kappas, T - 1)
    return PairedDataset(inputs=inputs, targets=targets, sim_index=sim_index,
                         kappas=kappas, mask=ensemble.mask.copy())


def split(dataset: PairedDataset, ratios: tuple[float, float, float],
          seed: int) -> PairedDataset:
    """Tag whole simulations train/val/test by shuffled contiguous blocks."""
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise OceanError("ratios must be positive and sum to 1")
    sims = np.unique(dataset.sim_index)
    n = sims.size
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(np.floor(ratios[1] * n))
    n_test = int(np.floor(ratios[2] * n))
    n_train = n - n_val - n_test  # floor remainders go to train
    if min(n_train, n_val, n_test) < 1:
        raise OceanError("not enough simulations for a nonempty split")
    tags = {}
    for pos, sim in enumerate(sims[order]):
        if pos < n_train:
            tags[int(sim)] = "train"
        elif pos < n_train + n_val:
            tags[int(sim)] = "val"
        else:
            tags[int(sim)] = "test"
    dataset.split_of_sim = tags
    return dataset


def normalize_fit(dataset: PairedDataset) -> NormStats:
    """Z-score stats for state channels over in-basin training pixels."""
    idx = dataset.indices("train")
    if idx.size == 0:
        raise OceanError("normalize_fit needs a tagged training split")
    x = dataset.inputs[idx][:, :4][:, :, dataset.mask]  # (n, 4, pix)
    mean = x.mean(axis=(0, 2))
    std = x.std(axis=(0, 2))
    passthrough = std < 1e-12
    std = np.where(passthrough, 1.0, std)
    lo, hi = (float(dataset.kappas.min()), float(dataset.kappas.max()))
    if hi <= lo:
        hi = lo + 1.0
    return NormStats(mean=mean, std=std, kappa_lo=lo, kappa_hi=hi,
                     passthrough=passthrough)


def _apply_state(x, stats, mask, invert=False):
    out = x.copy()
    m = stats.mean[:, None]
    s = stats.std[:, None]
    if invert:
        out[:, :4][:, :, mask] = x[:, :4][:, :, mask] * s + m
    else:
        out[:, :4][:, :, mask] = (x[:, :4][:, :, mask] - m) / s
    return out


def normalize_apply(dataset: PairedDataset, stats: NormStats) -> PairedDataset:
    if dataset.normalized:
        raise OceanError("dataset already normalized")
    inputs = _apply_state(dataset.inputs, stats, dataset.mask)
    span = stats.kappa_hi - stats.kappa_lo
    inputs[:, 4][:, dataset.mask] = (
        (dataset.inputs[:, 4][:, dataset.mask] - stats.kappa_lo) / span)
    targets = _apply_state(dataset.targets, stats, dataset.mask)
    out = PairedDataset(inputs=inputs, targets=targets,
                        sim_index=dataset.sim_index, kappas=dataset.kappas,
                        mask=dataset.mask, split_of_sim=dict(dataset.split_of_sim),
                        stats=stats, normalized=True)
    tr = out.indices("train")
    if tr.size:
        out.climatology = out.targets[tr].mean(axis=0)
    return out


def normalize_invert_states(states: np.ndarray, stats: NormStats,
                            mask: np.ndarray) -> np.ndarray:
    """Invert z-scoring on (N, 4, H, W) state tensors."""
    return _apply_state(states, stats, mask, invert=True)


def normalize_state_frame(frame4: np.ndarray, stats: NormStats,
                          mask: np.ndarray) -> np.ndarray:
    """Normalize a single (4, H, W) state frame."""
    return _apply_state(frame4[None], stats, mask)[0]


def normalize_kappa(kappa: float, stats: NormStats) -> float:
    return (kappa - stats.kappa_lo) / (stats.kappa_hi - stats.kappa_lo)


# ---------------------------------------------------------------------------
# storage: little-endian float32 blob + JSON sidecar

def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_ensemble(ensemble: SimulationEnsemble, path: str | Path) -> None:
    path = Path(path)
    blob = np.ascontiguousarray(ensemble.states, dtype="<f4")
    sidecar = {
        "format": "gyrebo-ensemble-v1",
        "shape": list(ensemble.states.shape),
        "channels": list(CHANNELS),
        "kappas": ensemble.kappas.tolist(),
        "mask": np.packbits(ensemble.mask).tolist(),
        "mask_shape": list(ensemble.mask.shape),
        "seed": ensemble.gen.seed,
        "gen": asdict(ensemble.gen),
    }
    path.write_bytes(blob.tobytes())
    _sidecar_path(path).write_text(json.dumps(sidecar))


def load_ensemble(path: str | Path) -> SimulationEnsemble:
    path = Path(path)
    sc_path = _sidecar_path(path)
    if not sc_path.exists():
        raise OceanError(f"missing sidecar {sc_path}")
    try:
        sidecar = json.loads(sc_path.read_text())
    except json.JSONDecodeError as exc:
        raise OceanError(f"corrupt sidecar {sc_path}") from exc
    if sidecar.get("format") != "gyrebo-ensemble-v1":
        raise OceanError("unrecognized ensemble format")
    shape = tuple(sidecar["shape"])
    flat = np.frombuffer(path.read_bytes(), dtype="<f4")
    if flat.size != int(np.prod(shape)):
        raise OceanError(
            f"blob holds {flat.size} values, sidecar expects {np.prod(shape)}")
    states = flat.reshape(shape).copy()
    mask_shape = tuple(sidecar["mask_shape"])
    mask = np.unpackbits(
        np.array(sidecar["mask"], dtype=np.uint8))[: mask_shape[0] * mask_shape[1]]
    mask = mask.reshape(mask_shape).astype(bool)
    gen_d = dict(sidecar["gen"])
    gen_d["kappa_range"] = tuple(gen_d["kappa_range"])
    gen_d["kappa_nd_range"] = tuple(gen_d["kappa_nd_range"])
    gen = GenConfig(**gen_d)
    return SimulationEnsemble(states=states,
                              kappas=np.array(sidecar["kappas"]),
                              mask=mask, gen=gen)
