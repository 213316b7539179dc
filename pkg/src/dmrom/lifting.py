"""Out-of-sample restriction and lifting between ambient and reduced spaces.

Restriction evaluates the diffusion-map coordinates of new ambient points by
replaying the training kernel normalization on the new kernel row (Nystrom
extension). Lifting goes the other way: a second Gaussian-kernel eigenbasis is
built on the reduced training coordinates and every ambient channel is
expanded in it, so reduced forecasts can be mapped back to ambient values.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from . import dmaps
from .dmaps import DiffusionEmbedding

EIG_FLOOR = 1e-8          # default relative eigenvalue truncation for lifting
MIN_EIGENVALUE = 1e-12    # restriction is ill-posed below this


def _points(X) -> np.ndarray:
    values = getattr(X, "values", X)
    return np.atleast_2d(np.asarray(values, dtype=float))


def nystrom_restrict(E: DiffusionEmbedding, X_train, x_new, selected=None) -> np.ndarray:
    """Reduced coordinates of new ambient points via the training kernel chain.

    The new kernel row gets the same two-step normalization as the training
    affinities (density correction by the training degrees and its own row sum,
    then row normalization), after which each coordinate is read off as
    psi_l(x*) = (1/lam_l) sum_j p*_j psi_{j,l}, scaled by lam_l^t.

    Parameters
    ----------
    E : DiffusionEmbedding
        Embedding built from ``X_train`` (its kernel scale is reused).
    X_train : array or TimeSeriesMatrix, shape (N, M)
    x_new : array, shape (M,) or (n, M)
    selected : list of int, optional
        1-based eigen indices to evaluate; defaults to all 1..k.

    Returns
    -------
    ndarray
        Coordinates with shape (len(selected),) for a single point or
        (n, len(selected)) for a batch. Points whose kernel row underflows to
        zero are out of support: a warning is emitted and their coordinates
        are zero.
    """
    x_train = _points(X_train)
    x_new = np.asarray(x_new, dtype=float)
    single = x_new.ndim == 1
    x_new = np.atleast_2d(x_new)
    if x_new.shape[1] != x_train.shape[1]:
        raise ValueError(
            f"query dimension {x_new.shape[1]} does not match training dimension {x_train.shape[1]}"
        )
    if not np.all(np.isfinite(x_new)):
        raise ValueError("query points contain non-finite values")
    if selected is None:
        selected = list(range(1, E.k + 1))
    sel = np.asarray(selected, dtype=int)
    if sel.size == 0 or np.any(sel < 1) or np.any(sel > E.k):
        raise ValueError(f"selected indices must lie in 1..{E.k}")
    lam = E.eigenvalues[sel]
    if np.any(np.abs(lam) < MIN_EIGENVALUE):
        bad = sel[np.abs(lam) < MIN_EIGENVALUE]
        raise ValueError(
            f"restriction ill-posed: eigenvalue below {MIN_EIGENVALUE} at index {bad[0]}"
        )

    aff = dmaps.gaussian_affinity(x_train, E.sigma)
    degrees = aff.W.sum(axis=1)
    k_star = np.exp(-cdist(x_new, x_train, metric="sqeuclidean") / (2.0 * E.sigma))
    row_sums = k_star.sum(axis=1)
    out = np.zeros((x_new.shape[0], sel.size))
    dead = row_sums == 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} query point(s) out of kernel support, coordinates set to 0"
        )
    alive = ~dead
    if np.any(alive):
        w_tilde = k_star[alive] / (
            row_sums[alive, None] ** E.alpha * degrees[None, :] ** E.alpha
        )
        p_star = w_tilde / w_tilde.sum(axis=1)[:, None]
        psi_hat = (p_star @ E.eigenvectors[:, sel]) / lam[None, :]
        out[alive] = psi_hat * (lam ** int(E.t))[None, :]
    return out[0] if single else out


@dataclass(frozen=True)
class GhLiftModel:
    """Kernel eigenbasis on reduced training coordinates plus channel expansions."""

    y_train: np.ndarray        # N x d reduced coordinates
    x_train: np.ndarray        # N x M ambient values
    gh_sigma: float
    eigenvalues: np.ndarray    # retained, descending, all positive
    eigenvectors: np.ndarray   # N x d_gh orthonormal columns
    eig_floor: float
    coeffs: np.ndarray         # d_gh x M channel expansion coefficients

    @property
    def d_gh(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_channels(self) -> int:
        return self.x_train.shape[1]


def gh_fit(Y_train, X_train, gh_sigma="auto", eig_floor: float = EIG_FLOOR) -> GhLiftModel:
    """Eigenbasis of the Gaussian kernel on the reduced coordinates.

    Components with eigenvalue below ``eig_floor`` times the largest one (or
    not strictly positive) are truncated; the remaining basis carries the
    expansion coefficients of every ambient channel.
    """
    y = _points(Y_train)
    x = _points(X_train)
    if y.shape[0] != x.shape[0]:
        raise ValueError(
            f"row mismatch: {y.shape[0]} coordinate rows, {x.shape[0]} ambient rows"
        )
    if y.shape[0] < 2:
        raise ValueError("need at least 2 training points")
    if eig_floor < 0:
        raise ValueError(f"eig_floor must be >= 0, got {eig_floor}")
    if gh_sigma == "auto" or gh_sigma is None:
        gh_sigma = dmaps.auto_sigma(y)
    gh_sigma = float(gh_sigma)
    if gh_sigma <= 0:
        raise ValueError(f"kernel scale must be positive, got {gh_sigma}")
    kernel = np.exp(-dmaps.squared_distances(y) / (2.0 * gh_sigma))
    np.fill_diagonal(kernel, 1.0)
    vals, vecs = eigh(kernel)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    keep = (vals > 0) & (vals >= eig_floor * vals[0])
    if not np.any(keep):
        raise ValueError("no kernel eigenvalues survive the truncation threshold")
    vals = vals[keep]
    vecs = vecs[:, keep]
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0
    return GhLiftModel(
        y_train=y,
        x_train=x,
        gh_sigma=gh_sigma,
        eigenvalues=vals,
        eigenvectors=vecs,
        eig_floor=float(eig_floor),
        coeffs=vecs.T @ x,
    )


def gh_lift(model: GhLiftModel, Y_new) -> np.ndarray:
    """Extend all channel functions to new reduced points: K Psi Lam^-1 Psi' f.

    Evaluated as ((K @ Psi) Lam^-1) @ coeffs so that near the training set the
    K @ Psi ~ Psi Lam product cancels the inverse eigenvalues.
    """
    y_new = np.asarray(Y_new, dtype=float)
    single = y_new.ndim == 1
    y_new = np.atleast_2d(y_new)
    if y_new.shape[0] == 0:
        return np.zeros((0, model.n_channels))
    if y_new.shape[1] != model.y_train.shape[1]:
        raise ValueError(
            f"query dimension {y_new.shape[1]} does not match training dimension "
            f"{model.y_train.shape[1]}"
        )
    if not np.all(np.isfinite(y_new)):
        raise ValueError("query points contain non-finite values")
    kernel = np.exp(
        -cdist(y_new, model.y_train, metric="sqeuclidean") / (2.0 * model.gh_sigma)
    )
    dead = kernel.sum(axis=1) == 0.0
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} query point(s) out of kernel support, lift is near zero"
        )
    lifted = ((kernel @ model.eigenvectors) / model.eigenvalues[None, :]) @ model.coeffs
    return lifted[0] if single else lifted


def save_gh_model(model: GhLiftModel, directory) -> None:
    """Bundle layout mirrors the embedding bundle, tagged space=reduced."""
    os.makedirs(directory, exist_ok=True)

    def write_matrix(name, arr, header_cols):
        with open(os.path.join(directory, name), "w") as fh:
            fh.write(",".join(header_cols) + "\n")
            for row in np.atleast_2d(arr):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    with open(os.path.join(directory, "eigenvalues.csv"), "w") as fh:
        fh.write("eigenvalue\n")
        for v in model.eigenvalues:
            fh.write(repr(float(v)) + "\n")
    write_matrix(
        "eigenvectors.csv",
        model.eigenvectors,
        [f"psi_{l}" for l in range(model.d_gh)],
    )
    write_matrix(
        "y_train.csv", model.y_train, [f"y_{j}" for j in range(model.y_train.shape[1])]
    )
    write_matrix(
        "x_train.csv", model.x_train, [f"x_{m}" for m in range(model.x_train.shape[1])]
    )
    meta = {
        "space": "reduced",
        "sigma": model.gh_sigma,
        "eig_floor": model.eig_floor,
        "d_gh": model.d_gh,
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_gh_model(directory) -> GhLiftModel:
    meta_path = os.path.join(directory, "meta.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt lift bundle {meta_path}: {exc}") from exc
    for key in ("space", "sigma", "eig_floor", "d_gh"):
        if key not in meta:
            raise ValueError(f"corrupt lift bundle {meta_path}: missing {key!r}")
    vals = np.loadtxt(os.path.join(directory, "eigenvalues.csv"), skiprows=1, ndmin=1)
    vecs = np.loadtxt(
        os.path.join(directory, "eigenvectors.csv"), skiprows=1, delimiter=",", ndmin=2
    )
    y = np.loadtxt(os.path.join(directory, "y_train.csv"), skiprows=1, delimiter=",", ndmin=2)
    x = np.loadtxt(os.path.join(directory, "x_train.csv"), skiprows=1, delimiter=",", ndmin=2)
    if len(vals) != meta["d_gh"] or vecs.shape[1] != meta["d_gh"]:
        raise ValueError(f"corrupt lift bundle {directory}: shape mismatch")
    return GhLiftModel(
        y_train=y,
        x_train=x,
        gh_sigma=float(meta["sigma"]),
        eigenvalues=vals,
        eigenvectors=vecs,
        eig_floor=float(meta["eig_floor"]),
        coeffs=vecs.T @ x,
    )
