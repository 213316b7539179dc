"""Loading, validation, detrending and splitting of multivariate time series.

Also provides seeded synthetic datasets with known low-dimensional dynamics,
used throughout the test suite as ground-truth oracles.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DEAD_CHANNEL_REL_TOL = 1e-10


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """N x M multivariate series: rows are time instants, columns are channels."""

    values: np.ndarray
    channel_names: list[str]
    dt: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        n, m = values.shape
        # single-row fragments are legal (a split may leave one test row);
        # full series are checked at load/detrend time instead
        if n < 1:
            raise ValueError("need at least 1 time point")
        if m < 1:
            raise ValueError("need at least 1 channel")
        if len(self.channel_names) != m:
            raise ValueError(
                f"{len(self.channel_names)} channel names for {m} channels"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StimulusMatrix:
    """N x p design matrix of stimulus/condition regressors."""

    values: np.ndarray
    condition_names: list[str]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError(f"stimulus values must be 2-D, got shape {values.shape}")
        if len(self.condition_names) != values.shape[1]:
            raise ValueError("condition_names length does not match column count")
        if not np.all(np.isfinite(values)):
            raise ValueError("stimulus values contain non-finite entries")

    @property
    def n_conditions(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Leading `n_train` rows form the training block, the rest is the test block."""

    n_train: int

    def validate(self, n_total: int) -> None:
        if not 1 < self.n_train < n_total:
            raise ValueError(
                f"n_train must satisfy 1 < n_train < {n_total}, got {self.n_train}"
            )


def load_timeseries(path, format: str = "csv_wide") -> TimeSeriesMatrix:
    """Load a wide CSV (header = channel names, row i = time index i).

    Parameters
    ----------
    path : str or pathlib.Path
    format : str
        Only "csv_wide" is supported.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ValueError
        On a non-numeric cell (reported with its 1-based data row and column),
        ragged rows, or fewer than 2 data rows.
    """
    if format != "csv_wide":
        raise ValueError(f"unsupported format {format!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        m = len(names)
        rows = []
        for r, row in enumerate(reader, start=1):
            if len(row) != m:
                raise ValueError(
                    f"{path}: row {r} has {len(row)} fields, expected {m}"
                )
            parsed = []
            for c, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell at (row {r}, column {c}): {cell!r}"
                    ) from None
            rows.append(parsed)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 data rows, got {len(rows)}")
    return TimeSeriesMatrix(np.array(rows, dtype=float), names)


def write_timeseries(X: TimeSeriesMatrix, path) -> None:
    """Write a wide CSV that `load_timeseries` reproduces bit-exactly.

    Floats are written with `repr`, the shortest round-tripping representation.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(X.channel_names)
        for row in X.values:
            writer.writerow([repr(float(v)) for v in row])


def detrend_standardize(
    X: TimeSeriesMatrix,
    drop_dead: bool = False,
    n_fit: int | None = None,
) -> TimeSeriesMatrix:
    """Remove the per-channel least-squares line and scale to unit sample std.

    The line is fit against the time index 0..N-1 and the standard deviation
    uses the N-1 denominator. Channels that are constant after detrending are
    an error unless ``drop_dead`` is set, in which case they are removed and
    reported through the module logger.

    Parameters
    ----------
    n_fit : int, optional
        When given, the line fit and the scale are estimated from the leading
        ``n_fit`` rows only and applied to the whole series (train-only
        statistics). Default is full-series statistics.
    """
    values = X.values
    n = values.shape[0]
    if n_fit is None:
        n_fit = n
    if not 2 <= n_fit <= n:
        raise ValueError(f"n_fit must be in [2, {n}], got {n_fit}")

    t = np.arange(n, dtype=float)
    tf = t[:n_fit]
    vf = values[:n_fit]
    tc = tf - tf.mean()
    slope = (tc @ vf) / (tc @ tc)
    intercept = vf.mean(axis=0) - slope * tf.mean()
    detrended = values - (intercept[None, :] + np.outer(t, slope))

    sd = detrended[:n_fit].std(axis=0, ddof=1)
    sd_orig = vf.std(axis=0, ddof=1)
    dead = sd <= DEAD_CHANNEL_REL_TOL * np.maximum(sd_orig, 1e-300)
    if np.any(dead):
        dead_names = [X.channel_names[i] for i in np.flatnonzero(dead)]
        if not drop_dead:
            raise ValueError(
                "constant channel(s) after detrending: " + ", ".join(dead_names)
            )
        logger.warning("dropping dead channel(s): %s", ", ".join(dead_names))
        keep = ~dead
        detrended = detrended[:, keep]
        sd = sd[keep]
        names = [nm for nm, k in zip(X.channel_names, keep) if k]
    else:
        names = list(X.channel_names)
    if detrended.shape[1] == 0:
        raise ValueError("all channels dead after detrending")
    return TimeSeriesMatrix(detrended / sd[None, :], names, X.dt)


def split_train_test(
    X: TimeSeriesMatrix, spec: SplitSpec
) -> tuple[TimeSeriesMatrix, TimeSeriesMatrix]:
    """Partition rows into leading train and trailing test blocks."""
    spec.validate(X.n_times)
    train = TimeSeriesMatrix(X.values[: spec.n_train].copy(), list(X.channel_names), X.dt)
    test = TimeSeriesMatrix(X.values[spec.n_train:].copy(), list(X.channel_names), X.dt)
    return train, test


@dataclass(frozen=True)
class SynthConfig:
    """Configuration for a seeded synthetic dataset with known latent dynamics."""

    q: int = 2
    ambient_dim: int = 50
    n_times: int = 400
    noise: float = 0.0
    seed: int = 0
    dynamics: str = "limit_cycle"  # or "linear_stable"
    frequency_scale: float = 1.5

    def validate(self) -> None:
        if self.q not in (2, 3):
            raise ValueError(f"intrinsic dimension q must be 2 or 3, got {self.q}")
        if self.ambient_dim < self.q:
            raise ValueError(
                f"ambient dimension {self.ambient_dim} < intrinsic dimension {self.q}"
            )
        if self.n_times < 2:
            raise ValueError("n_times must be >= 2")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.dynamics not in ("linear_stable", "limit_cycle"):
            raise ValueError(f"unknown dynamics {self.dynamics!r}")


@dataclass(frozen=True)
class SynthTruth:
    """Ground truth behind a synthetic dataset: latent path plus the embedding map."""

    latent: np.ndarray          # N x q
    weights: np.ndarray         # M x q cosine-feature frequencies
    phases: np.ndarray          # length M
    amplitude: float
    dynamics: str
    params: dict = field(default_factory=dict)

    def embed(self, latent: np.ndarray) -> np.ndarray:
        """Apply the fixed nonlinear embedding to a latent trajectory."""
        latent = np.atleast_2d(np.asarray(latent, dtype=float))
        return self.amplitude * np.cos(latent @ self.weights.T + self.phases[None, :])

    def to_json(self) -> str:
        doc = {
            "dynamics": self.dynamics,
            "amplitude": self.amplitude,
            "params": self.params,
            "latent": self.latent.tolist(),
            "weights": self.weights.tolist(),
            "phases": self.phases.tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SynthTruth":
        doc = json.loads(text)
        return SynthTruth(
            latent=np.array(doc["latent"], dtype=float),
            weights=np.array(doc["weights"], dtype=float),
            phases=np.array(doc["phases"], dtype=float),
            amplitude=float(doc["amplitude"]),
            dynamics=doc["dynamics"],
            params=doc["params"],
        )


def _latent_linear_stable(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    # rotation + mild decay, conjugated by a random orthogonal frame
    rho = rng.uniform(0.97, 0.999)
    omega = rng.uniform(2 * np.pi / 60, 2 * np.pi / 20)
    rot = np.array(
        [[np.cos(omega), -np.sin(omega)], [np.sin(omega), np.cos(omega)]]
    )
    if cfg.q == 2:
        core = rho * rot
    else:
        core = np.zeros((3, 3))
        core[:2, :2] = rho * rot
        core[2, 2] = rng.uniform(0.9, 0.99)
    basis, _ = np.linalg.qr(rng.normal(size=(cfg.q, cfg.q)))
    a = basis @ core @ basis.T
    z = np.empty((cfg.n_times, cfg.q))
    z[0] = rng.normal(size=cfg.q)
    for i in range(cfg.n_times - 1):
        z[i + 1] = a @ z[i]
    return z, {"matrix": a.tolist(), "rho": float(rho), "omega": float(omega)}


def _latent_limit_cycle(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    # Hopf-style planar cycle; started on r=1 exactly so the path is a closed curve
    gamma = 0.1
    omega = 2 * np.pi / 40
    theta0 = rng.uniform(0, 2 * np.pi)
    r = 1.0
    z = np.empty((cfg.n_times, cfg.q))
    theta = theta0
    for i in range(cfg.n_times):
        z[i, 0] = r * np.cos(theta)
        z[i, 1] = r * np.sin(theta)
        if cfg.q == 3:
            z[i, 2] = np.cos(2 * theta)
        r = r + gamma * r * (1.0 - r * r)
        theta = theta + omega
    return z, {"gamma": gamma, "omega": float(omega), "theta0": float(theta0)}


def generate_synthetic(cfg: SynthConfig) -> tuple[TimeSeriesMatrix, SynthTruth]:
    """Generate an ambient series from a known q-dimensional dynamical system.

    The latent trajectory is pushed through a fixed random-cosine-feature map
    into ``ambient_dim`` channels and i.i.d. Gaussian noise is added on top.
    Deterministic given the seed; with ``noise=0`` the ambient values equal the
    embedding of the latent trajectory exactly.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if cfg.dynamics == "linear_stable":
        latent, params = _latent_linear_stable(cfg, rng)
    else:
        latent, params = _latent_limit_cycle(cfg, rng)
    weights = rng.normal(size=(cfg.ambient_dim, cfg.q)) * (
        cfg.frequency_scale / np.sqrt(cfg.q)
    )
    phases = rng.uniform(0, 2 * np.pi, size=cfg.ambient_dim)
    truth = SynthTruth(
        latent=latent,
        weights=weights,
        phases=phases,
        amplitude=1.0,
        dynamics=cfg.dynamics,
        params=params,
    )
    ambient = truth.embed(latent)
    if cfg.noise > 0:
        ambient = ambient + cfg.noise * rng.normal(size=ambient.shape)
    names = [f"ch{m:03d}" for m in range(cfg.ambient_dim)]
    return TimeSeriesMatrix(ambient, names), truth
