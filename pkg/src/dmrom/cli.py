"""Pipeline command line.

Subcommands wire the stages together over a single JSON run config:

    synth     generate a seeded synthetic input series
    glm       per-channel regression against the stimulus design
    embed     detrend/split, spectral embedding, coordinate selection, lift fit
    train     fit ROMs on the training coordinates (--method fnn|koopman)
    forecast  closed-loop forecasts over the test horizon, plus the baseline
    evaluate  per-channel error table across methods
    run --all everything above in order

Exit codes: 0 success, 2 validation errors (bad config/input), 1 runtime
failures. Artifacts land in output_dir/{embedding,models,forecasts,reports};
a meta.json echoes the config and its hash, and nothing written depends on
wall-clock time, so repeated runs with one config are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import dmaps, evaluate, glm, lifting, parsimony, rom_fnn, rom_koopman
from .ingest import (
    SplitSpec,
    SynthConfig,
    TimeSeriesMatrix,
    detrend_standardize,
    generate_synthetic,
    load_timeseries,
    split_train_test,
    write_timeseries,
)
from .rom_fnn import TrainConfig

LOCK_NAME = ".lock"


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class DmapsSection:
    sigma: object = "auto"
    alpha: float = 1.0
    t: int = 0
    k: int = 30


@dataclass(frozen=True)
class ParsimonySection:
    d: int = 5
    scale_fraction: float = 1.0 / 3.0


@dataclass(frozen=True)
class KoopmanSection:
    svd_tol: float = 1e-10
    augment_stimulus: bool = False


@dataclass(frozen=True)
class GhSection:
    sigma: object = "auto"
    eig_floor: float = 1e-8


@dataclass(frozen=True)
class GlmSection:
    kernel: tuple = ()
    contrasts: tuple = ()   # pairs (name, vector)
    threshold: float = 0.001


@dataclass(frozen=True)
class RunConfig:
    input: str
    output_dir: str
    seed: int = 0
    n_train: int = 280
    standardize: str = "full"   # or "train_only"
    drop_dead: bool = False
    epochs: tuple = ()          # triples (condition, start, end), half-open
    conditions: tuple = ()
    dmaps: DmapsSection = DmapsSection()
    parsimony: ParsimonySection = ParsimonySection()
    fnn: TrainConfig = TrainConfig()
    koopman: KoopmanSection = KoopmanSection()
    gh: GhSection = GhSection()
    nrw_mode: str = "reduced_then_lift"
    glm: GlmSection = GlmSection()
    synth: SynthConfig = None

    def __post_init__(self):
        if not self.input:
            raise ValueError("config must set 'input'")
        if not self.output_dir:
            raise ValueError("config must set 'output_dir'")
        if self.n_train < 2:
            raise ValueError(f"n_train must be >= 2, got {self.n_train}")
        if self.standardize not in ("full", "train_only"):
            raise ValueError(f"standardize must be 'full' or 'train_only', got {self.standardize!r}")
        if self.nrw_mode not in ("reduced_then_lift", "ambient"):
            raise ValueError(f"unknown nrw mode {self.nrw_mode!r}")
        if self.epochs and not self.conditions:
            raise ValueError("epochs given without a conditions list")


def _section(data: dict, name: str, defaults: dict) -> dict:
    raw = data.get(name, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"config section {name!r} must be an object")
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ValueError(f"unknown key(s) in config section {name!r}: {', '.join(unknown)}")
    merged = dict(defaults)
    merged.update(raw)
    return merged


def load_config(path, seed_override: int = None) -> RunConfig:
    """Parse and validate a JSON run config, applying the optional seed override."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config root must be an object")
    top_keys = {
        "input", "output_dir", "seed", "n_train", "standardize", "drop_dead",
        "epochs", "conditions", "dmaps", "parsimony", "fnn", "koopman", "gh",
        "nrw", "glm", "synth",
    }
    unknown = sorted(set(data) - top_keys)
    if unknown:
        raise ValueError(f"{path}: unknown config key(s): {', '.join(unknown)}")

    seed = int(seed_override if seed_override is not None else data.get("seed", 0))

    dm = _section(data, "dmaps", {"sigma": "auto", "alpha": 1.0, "t": 0, "k": 30})
    pars = _section(data, "parsimony", {"d": 5, "scale_fraction": 1.0 / 3.0})
    fnn_defaults = {
        "hidden_sizes": [2, 4, 8, 16],
        "decay_values": [1e-4, 1e-3, 1e-2, 1e-1],
        "folds": 10,
        "repeats": 10,
        "max_epochs": 2000,
        "learning_rate": 0.05,
        "seed": seed,
        "tol": 1e-9,
    }
    fnn = _section(data, "fnn", fnn_defaults)
    koop = _section(data, "koopman", {"svd_tol": 1e-10, "augment_stimulus": False})
    gh_sec = _section(data, "gh", {"sigma": "auto", "eig_floor": 1e-8})
    nrw = _section(data, "nrw", {"mode": "reduced_then_lift"})
    glm_sec = _section(data, "glm", {"kernel": [], "contrasts": {}, "threshold": 0.001})
    contrasts = glm_sec["contrasts"]
    if not isinstance(contrasts, dict):
        raise ValueError("glm.contrasts must map contrast names to vectors")

    synth_cfg = None
    if "synth" in data and data["synth"] is not None:
        sy = _section(
            data,
            "synth",
            {
                "q": 2,
                "ambient_dim": 50,
                "n_times": 400,
                "noise": 0.0,
                "seed": seed,
                "dynamics": "limit_cycle",
                "frequency_scale": 1.5,
            },
        )
        synth_cfg = SynthConfig(**sy)

    epochs = tuple(
        (str(e[0]), int(e[1]), int(e[2])) for e in data.get("epochs", [])
    )
    return RunConfig(
        input=data.get("input"),
        output_dir=data.get("output_dir"),
        seed=seed,
        n_train=int(data.get("n_train", 280)),
        standardize=data.get("standardize", "full"),
        drop_dead=bool(data.get("drop_dead", False)),
        epochs=epochs,
        conditions=tuple(str(c) for c in data.get("conditions", [])),
        dmaps=DmapsSection(sigma=dm["sigma"], alpha=float(dm["alpha"]), t=int(dm["t"]), k=int(dm["k"])),
        parsimony=ParsimonySection(d=int(pars["d"]), scale_fraction=float(pars["scale_fraction"])),
        fnn=TrainConfig(
            hidden_sizes=tuple(fnn["hidden_sizes"]),
            decay_values=tuple(fnn["decay_values"]),
            folds=int(fnn["folds"]),
            repeats=int(fnn["repeats"]),
            max_epochs=int(fnn["max_epochs"]),
            learning_rate=float(fnn["learning_rate"]),
            seed=int(fnn["seed"]),
            tol=float(fnn["tol"]),
        ),
        koopman=KoopmanSection(
            svd_tol=float(koop["svd_tol"]), augment_stimulus=bool(koop["augment_stimulus"])
        ),
        gh=GhSection(sigma=gh_sec["sigma"], eig_floor=float(gh_sec["eig_floor"])),
        nrw_mode=nrw["mode"],
        glm=GlmSection(
            kernel=tuple(float(v) for v in glm_sec["kernel"]),
            contrasts=tuple((str(k), tuple(float(x) for x in v)) for k, v in contrasts.items()),
            threshold=float(glm_sec["threshold"]),
        ),
        synth=synth_cfg,
    )


def config_payload(cfg: RunConfig) -> dict:
    """Plain-dict echo of the resolved config, used for meta.json and hashing."""
    payload = {
        "input": cfg.input,
        "output_dir": cfg.output_dir,
        "seed": cfg.seed,
        "n_train": cfg.n_train,
        "standardize": cfg.standardize,
        "drop_dead": cfg.drop_dead,
        "epochs": [list(e) for e in cfg.epochs],
        "conditions": list(cfg.conditions),
        "dmaps": {
            "sigma": cfg.dmaps.sigma,
            "alpha": cfg.dmaps.alpha,
            "t": cfg.dmaps.t,
            "k": cfg.dmaps.k,
        },
        "parsimony": {"d": cfg.parsimony.d, "scale_fraction": cfg.parsimony.scale_fraction},
        "fnn": {
            "hidden_sizes": list(cfg.fnn.hidden_sizes),
            "decay_values": list(cfg.fnn.decay_values),
            "folds": cfg.fnn.folds,
            "repeats": cfg.fnn.repeats,
            "max_epochs": cfg.fnn.max_epochs,
            "learning_rate": cfg.fnn.learning_rate,
            "seed": cfg.fnn.seed,
            "tol": cfg.fnn.tol,
        },
        "koopman": {
            "svd_tol": cfg.koopman.svd_tol,
            "augment_stimulus": cfg.koopman.augment_stimulus,
        },
        "gh": {"sigma": cfg.gh.sigma, "eig_floor": cfg.gh.eig_floor},
        "nrw": {"mode": cfg.nrw_mode},
        "glm": {
            "kernel": list(cfg.glm.kernel),
            "contrasts": {name: list(vec) for name, vec in cfg.glm.contrasts},
            "threshold": cfg.glm.threshold,
        },
        "synth": None,
    }
    if cfg.synth is not None:
        payload["synth"] = {
            "q": cfg.synth.q,
            "ambient_dim": cfg.synth.ambient_dim,
            "n_times": cfg.synth.n_times,
            "noise": cfg.synth.noise,
            "seed": cfg.synth.seed,
            "dynamics": cfg.synth.dynamics,
            "frequency_scale": cfg.synth.frequency_scale,
        }
    return payload


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(config_payload(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# stage plumbing


class StageError(Exception):
    """Module error annotated with the pipeline stage it surfaced in."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"[{stage}] {original}")
        self.stage = stage
        self.original = original


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class RunPaths:
    root: str

    @property
    def embedding(self):
        return os.path.join(self.root, "embedding")

    @property
    def models(self):
        return os.path.join(self.root, "models")

    @property
    def forecasts(self):
        return os.path.join(self.root, "forecasts")

    @property
    def reports(self):
        return os.path.join(self.root, "reports")

    @property
    def meta(self):
        return os.path.join(self.root, "meta.json")


def _write_matrix(path, arr, names) -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


def _read_matrix(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [[float(c) for c in row] for row in reader]
    arr = np.array(rows, dtype=float) if rows else np.zeros((0, len(names)))
    if arr.size and arr.shape[1] != len(names):
        raise ValueError(f"{path}: row width does not match header")
    return arr, names


def _write_meta(cfg: RunConfig, paths: RunPaths) -> None:
    os.makedirs(paths.root, exist_ok=True)
    doc = {"config": config_payload(cfg), "config_sha256": config_hash(cfg)}
    with open(paths.meta, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _design_matrix(cfg: RunConfig, n: int):
    if not cfg.epochs:
        return None
    return glm.build_design_matrix(list(cfg.epochs), n, list(cfg.conditions))


def _load_standardized(cfg: RunConfig) -> TimeSeriesMatrix:
    series = load_timeseries(cfg.input)
    n_fit = cfg.n_train if cfg.standardize == "train_only" else None
    return detrend_standardize(series, drop_dead=cfg.drop_dead, n_fit=n_fit)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> None:
    with _stage("synth"):
        if cfg.synth is None:
            raise ValueError("config has no 'synth' section")
        series, truth = generate_synthetic(cfg.synth)
        out_dir = os.path.dirname(os.path.abspath(cfg.input))
        os.makedirs(out_dir, exist_ok=True)
        write_timeseries(series, cfg.input)
        truth_path = os.path.splitext(cfg.input)[0] + "_truth.json"
        with open(truth_path, "w") as fh:
            fh.write(truth.to_json())
            fh.write("\n")
    print(f"synth: wrote {series.n_times} x {series.n_channels} series to {cfg.input}")
    print(f"synth: ground truth in {truth_path}")


def cmd_glm(cfg: RunConfig, paths: RunPaths) -> None:
    with _stage("glm"):
        if not cfg.epochs:
            raise ValueError("glm requires 'epochs' and 'conditions' in the config")
        if not cfg.glm.contrasts:
            raise ValueError("glm requires at least one contrast in glm.contrasts")
        series = _load_standardized(cfg)
        design = _design_matrix(cfg, series.n_times)
        if cfg.glm.kernel:
            design = glm.convolve_design(design, np.asarray(cfg.glm.kernel))
        fit = glm.fit_glm(series, design)
        os.makedirs(paths.reports, exist_ok=True)
        for name, vec in cfg.glm.contrasts:
            result = glm.contrast_tstat(fit, design, np.asarray(vec))
            out = os.path.join(paths.reports, f"activity_{name}.csv")
            glm.write_activity_report(
                out, fit, result, series.channel_names, design.condition_names,
                threshold=cfg.glm.threshold,
            )
            n_pass = int(np.sum(result.p_values < cfg.glm.threshold))
            print(
                f"glm: contrast {name!r}: {n_pass}/{series.n_channels} channels pass "
                f"p < {cfg.glm.threshold} -> {out}"
            )


def cmd_embed(cfg: RunConfig, paths: RunPaths) -> None:
    with _stage("ingest"):
        series = _load_standardized(cfg)
        train, test = split_train_test(series, SplitSpec(cfg.n_train))
    with _stage("dmaps"):
        embedding = dmaps.build_embedding(
            train.values, sigma=cfg.dmaps.sigma, alpha=cfg.dmaps.alpha, k=cfg.dmaps.k
        )
        embedding = dmaps.with_time(embedding, cfg.dmaps.t)
    with _stage("parsimony"):
        report = parsimony.rank_and_select(
            embedding.eigenvectors[:, 1:], cfg.parsimony.d, cfg.parsimony.scale_fraction
        )
    with _stage("lifting"):
        coords_train = dmaps.coords_for(embedding, report.selected)
        gh_model = lifting.gh_fit(
            coords_train, train.values, gh_sigma=cfg.gh.sigma, eig_floor=cfg.gh.eig_floor
        )
    with _stage("embed"):
        os.makedirs(paths.embedding, exist_ok=True)
        dmaps.save_embedding(embedding, paths.embedding)
        parsimony.save_report(report, os.path.join(paths.embedding, "parsimony.json"))
        _write_matrix(
            os.path.join(paths.embedding, "train_ambient.csv"), train.values, train.channel_names
        )
        _write_matrix(
            os.path.join(paths.embedding, "test_ambient.csv"), test.values, test.channel_names
        )
        lifting.save_gh_model(gh_model, os.path.join(paths.embedding, "gh_model"))
    lam = ", ".join(f"{v:.6f}" for v in embedding.eigenvalues)
    print(f"embed: eigenvalues: {lam}")
    print(f"embed: residuals er: {', '.join(f'{v:.4f}' for v in report.er)}")
    print(f"embed: selected coordinates: {', '.join(str(i) for i in report.selected)}")


def _load_embedding_artifacts(cfg: RunConfig, paths: RunPaths):
    embedding = dmaps.load_embedding(paths.embedding)
    report = parsimony.load_report(os.path.join(paths.embedding, "parsimony.json"))
    train_vals, channel_names = _read_matrix(os.path.join(paths.embedding, "train_ambient.csv"))
    coords_train = dmaps.coords_for(embedding, report.selected)
    return embedding, report, train_vals, channel_names, coords_train



def cmd_train(cfg: RunConfig, paths: RunPaths, method: str) -> None:
    with _stage("train"):
        embedding, report, train_vals, _, coords_train = _load_embedding_artifacts(cfg, paths)
        design = _design_matrix(cfg, cfg.n_train + _test_len(paths))
        stim_train = None if design is None else design.values[: cfg.n_train]
        os.makedirs(paths.models, exist_ok=True)
    if method == "fnn":
        d = len(report.selected)
        # unit-RMS coordinate units; keeps fixed-step descent conditioned
        # regardless of the training length (unit-norm eigenvectors shrink
        # coordinate amplitude like 1/sqrt(N))
        scale = float(np.sqrt(coords_train.shape[0]))
        for j in range(1, d + 1):
            with _stage("rom_fnn"):
                model, records = rom_fnn.fnn_train(coords_train * scale, stim_train, j, cfg.fnn)
                hidden, decay, score = rom_fnn.best_grid_cell(records)
                rom_fnn.save_fnn_model(
                    model,
                    os.path.join(paths.models, f"fnn_coord_{j}.json"),
                    decay=decay,
                )
                rom_fnn.write_cv_report(
                    records, os.path.join(paths.models, f"fnn_cv_coord_{j}.csv")
                )
            print(
                f"train: coordinate {j}: hidden={hidden}, decay={decay:g}, "
                f"cv mse={score:.3e}"
            )
    elif method == "koopman":
        with _stage("rom_koopman"):
            obs = coords_train
            if cfg.koopman.augment_stimulus and stim_train is not None:
                obs = np.hstack([coords_train, stim_train])
            model = rom_koopman.fit_koopman_model(obs, train_vals, cfg.koopman.svd_tol)
            rom_koopman.save_koopman_model(model, os.path.join(paths.models, "koopman.json"))
        mags = ", ".join(f"{abs(v):.6f}" for v in model.eigenvalues)
        print(f"train: one-step matrix is {model.n_coords} x {model.n_coords}")
        print(f"train: eigenvalue magnitudes: {mags}")
        print(f"train: training reconstruction residual: {model.training_residual:.3e}")
    else:
        raise StageError("train", ValueError(f"unknown method {method!r}"))


def _test_len(paths: RunPaths) -> int:
    test_vals, _ = _read_matrix(os.path.join(paths.embedding, "test_ambient.csv"))
    return test_vals.shape[0]


def cmd_forecast(cfg: RunConfig, paths: RunPaths) -> None:
    with _stage("forecast"):
        embedding, report, train_vals, _, coords_train = _load_embedding_artifacts(cfg, paths)
        test_vals, test_names = _read_matrix(os.path.join(paths.embedding, "test_ambient.csv"))
        h = test_vals.shape[0]
        if h == 0:
            raise ValueError("empty test set")
        gh_model = lifting.load_gh_model(os.path.join(paths.embedding, "gh_model"))
        d = len(report.selected)
        n_total = cfg.n_train + h
        design = _design_matrix(cfg, n_total)
        init = coords_train[-1]
        os.makedirs(paths.forecasts, exist_ok=True)
        coord_names = [f"y_{j}" for j in range(d)]

    with _stage("rom_fnn"):
        models = [
            rom_fnn.load_fnn_model(os.path.join(paths.models, f"fnn_coord_{j}.json"))
            for j in range(1, d + 1)
        ]
        stim_seq = (
            None if design is None else design.values[cfg.n_train - 1 : cfg.n_train - 1 + h]
        )
        # models operate in unit-RMS coordinate units (see cmd_train)
        scale = float(np.sqrt(coords_train.shape[0]))
        fnn_reduced = rom_fnn.fnn_forecast(models, init * scale, stim_seq, h) / scale
        fnn_ambient = lifting.gh_lift(gh_model, fnn_reduced)
        _write_matrix(os.path.join(paths.forecasts, "fnn_gh_reduced.csv"), fnn_reduced, coord_names)
        _write_matrix(
            os.path.join(paths.forecasts, "fnn_gh_ambient.csv"),
            fnn_ambient,
            test_names,
        )

    with _stage("rom_koopman"):
        kmodel = rom_koopman.load_koopman_model(os.path.join(paths.models, "koopman.json"))
        k_init = init
        if kmodel.n_coords != d:
            if design is None:
                raise ValueError(
                    f"model expects {kmodel.n_coords} observables but only {d} coordinates exist"
                )
            k_init = np.concatenate([init, design.values[cfg.n_train - 1]])
        k_reduced, k_ambient = rom_koopman.koopman_forecast(kmodel, k_init, h)
        _write_matrix(
            os.path.join(paths.forecasts, "koopman_reduced.csv"),
            k_reduced,
            [f"y_{j}" for j in range(k_reduced.shape[1])],
        )
        _write_matrix(
            os.path.join(paths.forecasts, "koopman_ambient.csv"),
            k_ambient,
            test_names,
        )

    with _stage("nrw"):
        if cfg.nrw_mode == "reduced_then_lift":
            reduced_truth = lifting.nystrom_restrict(
                embedding, train_vals, test_vals, report.selected
            )
            nrw = evaluate.nrw_forecast(
                reduced_truth, init, mode="reduced_then_lift", lift_model=gh_model
            )
            _write_matrix(
                os.path.join(paths.forecasts, "nrw_reduced.csv"), nrw.reduced, coord_names
            )
        else:
            nrw = evaluate.nrw_forecast(test_vals, train_vals[-1], mode="ambient")
        _write_matrix(
            os.path.join(paths.forecasts, "nrw_ambient.csv"),
            nrw.ambient,
            test_names,
        )
    print(f"forecast: horizon {h}, reduced dimension {d}")
    print(f"forecast: wrote fnn_gh, koopman, nrw ambient forecasts under {paths.forecasts}")


def cmd_evaluate(cfg: RunConfig, paths: RunPaths) -> None:
    with _stage("evaluate"):
        test_vals, channel_names = _read_matrix(
            os.path.join(paths.embedding, "test_ambient.csv")
        )
        if test_vals.shape[0] == 0:
            raise ValueError("empty test set")
        results = []
        for method in evaluate.METHODS:
            path = os.path.join(paths.forecasts, f"{method}_ambient.csv")
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing forecast artifact {path}")
            ambient, _ = _read_matrix(path)
            results.append(evaluate.ForecastResult(method=method, ambient=ambient))
        table = evaluate.comparison_table(results, test_vals, channel_names)
        os.makedirs(paths.reports, exist_ok=True)
        evaluate.write_comparison(table, os.path.join(paths.reports, "comparison.csv"))
        evaluate.write_plot_data(
            os.path.join(paths.reports, "plot_data.csv"),
            test_vals,
            results,
            channel_names,
            t_start=cfg.n_train,
        )
    for i, method in enumerate(table.methods):
        print(
            f"evaluate: {method}: mean rmse {table.rmse[i].mean():.4f}, "
            f"best on {int(table.best[i].sum())}/{len(table.channel_names)} channels"
        )
    print(f"evaluate: comparison table in {os.path.join(paths.reports, 'comparison.csv')}")


def cmd_run_all(cfg: RunConfig, paths: RunPaths) -> None:
    if not os.path.exists(cfg.input):
        if cfg.synth is None:
            raise StageError("run", FileNotFoundError(f"input file not found: {cfg.input}"))
        cmd_synth(cfg)
    if cfg.epochs and cfg.glm.contrasts:
        cmd_glm(cfg, paths)
    else:
        print("run: no epochs/contrasts configured, skipping glm")
    cmd_embed(cfg, paths)
    cmd_train(cfg, paths, "fnn")
    cmd_train(cfg, paths, "koopman")
    cmd_forecast(cfg, paths)
    cmd_evaluate(cfg, paths)


# ---------------------------------------------------------------------------
# entry point


@contextmanager
def _run_lock(paths: RunPaths):
    os.makedirs(paths.root, exist_ok=True)
    lock_path = os.path.join(paths.root, LOCK_NAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"run directory {paths.root} is locked by another run (remove {lock_path} "
            "if that run is dead)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        os.unlink(lock_path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmrom",
        description="Manifold-learning forecast pipeline for multivariate time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate a synthetic input series"),
        ("glm", "per-channel stimulus regression report"),
        ("embed", "spectral embedding + coordinate selection"),
        ("train", "fit forecasting models"),
        ("forecast", "closed-loop test-horizon forecasts"),
        ("evaluate", "error tables across methods"),
        ("run", "full pipeline"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name == "train":
            p.add_argument("--method", required=True, choices=["fnn", "koopman"])
        if name == "run":
            p.add_argument("--all", action="store_true", help="run every stage in order")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
    except (ValueError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    paths = RunPaths(root=cfg.output_dir)

    try:
        if args.command == "synth":
            cmd_synth(cfg)
            return 0
        if args.command == "run" and not args.all:
            print("error [config]: run requires --all", file=sys.stderr)
            return 2
        with _run_lock(paths):
            _write_meta(cfg, paths)
            if args.command == "glm":
                cmd_glm(cfg, paths)
            elif args.command == "embed":
                cmd_embed(cfg, paths)
            elif args.command == "train":
                cmd_train(cfg, paths, args.method)
            elif args.command == "forecast":
                cmd_forecast(cfg, paths)
            elif args.command == "evaluate":
                cmd_evaluate(cfg, paths)
            elif args.command == "run":
                cmd_run_all(cfg, paths)
        return 0
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2 if isinstance(exc.original, (ValueError, FileNotFoundError)) else 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
