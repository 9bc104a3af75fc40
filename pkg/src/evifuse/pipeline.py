"""Stage orchestration: weigh, bpa, fuse, analyze, render, verify.

Each stage consumes and produces only the documented file formats, so
running the stages individually on the same manifest is byte-identical
to one pipeline invocation. A failing stage leaves a FAILED marker
naming the stage and cause in the output directory.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import analytics, evidence, fusion, render
from . import io as eio
from . import reliability
from .errors import DataError, EngineError, InvariantViolation, ValidationError
from .io import RunManifest

log = logging.getLogger("evifuse")

VERIFY_TOLERANCE = 1e-9


def _outdir(manifest: RunManifest) -> str:
    if not manifest.output_dir:
        raise ValidationError("no output directory: set output_dir in the manifest or pass --out")
    os.makedirs(manifest.output_dir, exist_ok=True)
    return manifest.output_dir


def stage_weigh(manifest: RunManifest) -> dict:
    """Derive model weights from validation evidence; writes weights.json."""
    out = _outdir(manifest)
    n_classes = len(manifest.class_names)
    if manifest.weight_mode == "counts":
        logs = [
            reliability.load_validation_log(m.validation_log_path, m.model_id, n_classes=n_classes)
            for m in manifest.models
        ]
        counts = reliability.accumulate_counts(logs)
    else:
        scores = [m.score for m in manifest.models]
        counts = reliability.scores_to_pseudo_counts(scores, manifest.score_scale)
    posterior = reliability.tempered_posterior(
        counts, manifest.temperature, np.asarray(manifest.alpha0)
    )
    sampled = reliability.sample_weights(posterior, manifest.seed)
    expected = reliability.expected_weights(posterior)

    payload = {
        "model_ids": list(manifest.model_ids),
        "counts": [int(c) for c in counts],
        "alpha0": [float(a) for a in posterior.alpha0],
        "alpha_post": [float(a) for a in posterior.alpha],
        "temperature": manifest.temperature,
        "weight_mode": manifest.weight_mode,
        "weights": {m: float(w) for m, w in zip(manifest.model_ids, sampled.w)},
        "expected_weights": {m: float(w) for m, w in zip(manifest.model_ids, expected.w)},
        "provenance": sampled.label(),
        "seed": manifest.seed,
    }
    eio.save_json(os.path.join(out, eio.WEIGHTS_JSON), payload)
    eio.save_json(os.path.join(out, eio.RESOLVED_MANIFEST_JSON), manifest.to_dict())
    log.info("weights: %s", " ".join(f"{m}={w:.4f}" for m, w in payload["weights"].items()))
    return payload


def _load_weights(manifest: RunManifest) -> dict[str, float]:
    path = os.path.join(_outdir(manifest), eio.WEIGHTS_JSON)
    if not os.path.isfile(path):
        raise DataError(f"{path}: missing; run the weigh stage first")
    payload = eio.load_json(path)
    weights = payload.get("weights", {})
    missing = [m for m in manifest.model_ids if m not in weights]
    if missing:
        raise DataError(f"{path}: no weights for models: {', '.join(missing)}")
    return {m: float(weights[m]) for m in manifest.model_ids}


def compute_masses(manifest: RunManifest, weights: dict[str, float]) -> list[evidence.MassMap]:
    masses = []
    shape = None
    for entry in manifest.models:
        tensor = eio.read_tensor(entry.attribution_path)
        amap = evidence.attribution_from_tensor(
            entry.model_id, manifest.target_class, tensor.data, manifest.channel_mode
        )
        if shape is None:
            shape = amap.values.shape
        elif amap.values.shape != shape:
            raise DataError(
                f"{entry.model_id}: attribution shape {amap.values.shape} differs from {shape}"
            )
        masses.append(
            evidence.attribution_to_mass(amap, weights[entry.model_id], manifest.sensitivity)
        )
    return masses


def stage_bpa(manifest: RunManifest, *, dump: bool = True) -> list[evidence.MassMap]:
    """Convert attributions to mass maps; optionally dump the planes."""
    out = _outdir(manifest)
    weights = _load_weights(manifest)
    masses = compute_masses(manifest, weights)
    if dump:
        for mass in masses:
            eio.write_tensor(
                os.path.join(out, eio.mass_filename(mass.model_id)),
                evidence.mass_to_tensor(mass),
            )
    return masses


def _load_or_compute_masses(manifest: RunManifest) -> list[evidence.MassMap]:
    out = _outdir(manifest)
    weights = _load_weights(manifest)
    paths = [os.path.join(out, eio.mass_filename(m)) for m in manifest.model_ids]
    if all(os.path.isfile(p) for p in paths):
        return [
            evidence.mass_from_tensor(
                model_id, eio.read_tensor(path).data, manifest.sensitivity, weights[model_id]
            )
            for model_id, path in zip(manifest.model_ids, paths)
        ]
    return compute_masses(manifest, weights)


def stage_fuse(manifest: RunManifest, masses=None) -> fusion.EpistemicMaps:
    """Fuse mass maps and write the epistemic planes."""
    out = _outdir(manifest)
    if masses is None:
        masses = _load_or_compute_masses(manifest)
    maps = fusion.fuse_sequential(masses)
    eio.write_tensor(os.path.join(out, eio.BEL_NPY), maps.bel)
    eio.write_tensor(os.path.join(out, eio.PL_NPY), maps.pl)
    eio.write_tensor(os.path.join(out, eio.UNC_NPY), maps.unc)
    eio.write_tensor(os.path.join(out, eio.CONFLICT_NPY), maps.conflict.k_total)
    return maps


def _load_planes(out: str) -> dict[str, np.ndarray]:
    planes = {}
    missing = []
    for name in (eio.BEL_NPY, eio.PL_NPY, eio.UNC_NPY, eio.CONFLICT_NPY):
        path = os.path.join(out, name)
        if not os.path.isfile(path):
            missing.append(name)
        else:
            planes[name] = eio.read_tensor(path).data.astype(np.float64)
    if missing:
        raise DataError(f"{out}: missing artifacts: {', '.join(missing)}; run the fuse stage first")
    return planes


def stage_analyze(manifest: RunManifest, *, per_model: bool = False, csv: bool = False) -> dict:
    """Densities and summary statistics of the fused planes; writes stats.json."""
    out = _outdir(manifest)
    planes = _load_planes(out)
    weights = _load_weights(manifest)
    bel = planes[eio.BEL_NPY]
    pl = planes[eio.PL_NPY]
    unc = planes[eio.UNC_NPY]
    k_total = planes[eio.CONFLICT_NPY]

    curves = [
        analytics.kde(bel, metric="belief", seed=manifest.seed),
        analytics.kde(pl, metric="plausibility", seed=manifest.seed),
        analytics.kde(unc, metric="uncertainty", seed=manifest.seed),
    ]
    if per_model:
        for mass in _load_or_compute_masses(manifest):
            curves.append(
                analytics.kde(
                    mass.m_for, metric=f"belief[{mass.model_id}]", seed=manifest.seed
                )
            )
            curves.append(
                analytics.kde(
                    1.0 - mass.m_against,
                    metric=f"plausibility[{mass.model_id}]",
                    seed=manifest.seed,
                )
            )
            curves.append(
                analytics.kde(
                    mass.m_ignorance,
                    metric=f"uncertainty[{mass.model_id}]",
                    seed=manifest.seed,
                )
            )

    stats = analytics.summarize(bel, pl, unc, k_total, weights)
    payload = stats.to_dict()
    payload["curves"] = [c.to_dict() for c in curves]
    payload["subsample_seed"] = manifest.seed
    eio.save_json(os.path.join(out, eio.STATS_JSON), payload)
    if csv:
        _write_curves_csv(os.path.join(out, "curves.csv"), curves)
    return payload


def _write_curves_csv(path: str, curves) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("metric,grid,density\n")
        for curve in curves:
            for g, d in zip(curve.grid, curve.density):
                fh.write(f"{curve.metric},{g!r},{d!r}\n")


def _write_sweep_csv(path: str, curve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("series,x,y\n")
        for name, ys in curve.series.items():
            for x, y in zip(curve.xs, ys):
                fh.write(f"{name},{x!r},{y!r}\n")


def stage_sweep(manifest: RunManifest, *, csv: bool = False) -> dict:
    """Temperature and sensitivity calibration curves; writes sweep JSONs."""
    out = _outdir(manifest)
    if manifest.weight_mode == "counts":
        n_classes = len(manifest.class_names)
        logs = [
            reliability.load_validation_log(m.validation_log_path, m.model_id, n_classes=n_classes)
            for m in manifest.models
        ]
        counts = reliability.accumulate_counts(logs)
    else:
        counts = reliability.scores_to_pseudo_counts(
            [m.score for m in manifest.models], manifest.score_scale
        )
    t_curve = analytics.sweep_temperature(
        counts, alpha0=np.asarray(manifest.alpha0), model_ids=manifest.model_ids
    )
    s_curve = analytics.sweep_sensitivity()
    eio.save_json(os.path.join(out, "sweep_temperature.json"), t_curve.to_dict())
    eio.save_json(os.path.join(out, "sweep_lambda.json"), s_curve.to_dict())
    if csv:
        _write_sweep_csv(os.path.join(out, "sweep_temperature.csv"), t_curve)
        _write_sweep_csv(os.path.join(out, "sweep_lambda.csv"), s_curve)
    return {"temperature": t_curve.to_dict(), "lambda": s_curve.to_dict()}


def stage_render(manifest: RunManifest, *, overlay_path: str | None = None) -> None:
    """Render the epistemic planes to PPM files under render/."""
    out = _outdir(manifest)
    planes = _load_planes(out)
    render_dir = os.path.join(out, eio.RENDER_DIR)
    os.makedirs(render_dir, exist_ok=True)
    k_total = planes[eio.CONFLICT_NPY]
    steps = max(1, len(manifest.models) - 1)
    jobs = [
        ("bel.ppm", planes[eio.BEL_NPY], render.BELIEF_GREEN),
        ("pl.ppm", planes[eio.PL_NPY], render.PLAUSIBILITY_BLUE),
        ("unc.ppm", planes[eio.UNC_NPY], render.UNCERTAINTY_VIRIDIS_LIKE),
        ("conflict.ppm", k_total / steps, render.CONFLICT_RED),
    ]
    base = None
    if overlay_path is not None:
        base = eio.read_tensor(overlay_path).data.astype(np.float64)
    for name, values, scale in jobs:
        image = render.render_map(values, scale)
        if image.clamped or image.nan_pixels:
            log.warning(
                "%s: %d clamped, %d NaN pixels", name, image.clamped, image.nan_pixels
            )
        render.write_image(image, os.path.join(render_dir, name))
        if base is not None:
            over = render.render_overlay(values, scale, base)
            render.write_image(over, os.path.join(render_dir, f"overlay_{name}"))


def run_pipeline(
    manifest: RunManifest,
    *,
    dump_masses: bool = False,
    per_model: bool = False,
    csv: bool = False,
    overlay_path: str | None = None,
) -> dict:
    """Run every stage in order; returns the summary payload."""
    out = _outdir(manifest)
    marker = os.path.join(out, eio.FAILED_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    stage = "weigh"
    try:
        weights = stage_weigh(manifest)
        stage = "bpa"
        masses = stage_bpa(manifest, dump=dump_masses)
        stage = "fuse"
        maps = stage_fuse(manifest, masses)
        stage = "analyze"
        stats = stage_analyze(manifest, per_model=per_model, csv=csv)
        stage = "render"
        stage_render(manifest, overlay_path=overlay_path)
    except EngineError as exc:
        with open(marker, "w", encoding="utf-8") as fh:
            fh.write(f"stage: {stage}\ncause: {exc}\n")
        raise type(exc)(f"pipeline stage {stage!r} failed: {exc}") from exc

    return {
        "output_dir": out,
        "weights": weights["weights"],
        "provenance": weights["provenance"],
        "mean_belief": float(maps.bel.mean()),
        "mean_plausibility": float(maps.pl.mean()),
        "mean_uncertainty": float(maps.unc.mean()),
        "mean_conflict": stats["mean_conflict"],
    }


def verify_output(out_dir: str) -> dict:
    """Re-check the published invariants of a completed run directory.

    Returns a report dict; raises InvariantViolation if any check exceeds
    the verification tolerance, DataError if artifacts are missing.
    """
    planes = _load_planes(out_dir)
    bel = planes[eio.BEL_NPY]
    pl = planes[eio.PL_NPY]
    unc = planes[eio.UNC_NPY]

    checks: dict[str, float] = {}
    checks["belief_range"] = float(max(np.max(-bel, initial=0.0), np.max(bel - 1.0, initial=0.0), 0.0))
    checks["plausibility_range"] = float(max(np.max(-pl, initial=0.0), np.max(pl - 1.0, initial=0.0), 0.0))
    checks["interval_ordering"] = float(max(np.max(bel - pl), 0.0))
    checks["epistemic_gap"] = float(np.max(np.abs(unc - (pl - bel))))
    # bel + (1 - pl) + unc must reassemble a unit mass.
    checks["mass_validity"] = float(np.max(np.abs(bel + (1.0 - pl) + unc - 1.0)))

    weights_path = os.path.join(out_dir, eio.WEIGHTS_JSON)
    if os.path.isfile(weights_path):
        payload = eio.load_json(weights_path)
        w = np.array(list(payload.get("weights", {}).values()), dtype=np.float64)
        if w.size:
            checks["weight_normalization"] = float(abs(w.sum() - 1.0))
            checks["weight_range"] = float(max(np.max(-w, initial=0.0), np.max(w - 1.0, initial=0.0), 0.0))
    else:
        checks["weight_normalization"] = float("nan")

    # With per-model mass dumps available the fusion itself is replayed.
    resolved_path = os.path.join(out_dir, eio.RESOLVED_MANIFEST_JSON)
    refused = None
    if os.path.isfile(resolved_path):
        try:
            manifest = eio.load_manifest(resolved_path, check_paths=False)
            mass_paths = [
                os.path.join(out_dir, eio.mass_filename(m)) for m in manifest.model_ids
            ]
            if all(os.path.isfile(p) for p in mass_paths):
                weights = _load_weights(manifest.with_overrides(output_dir=out_dir))
                masses = [
                    evidence.mass_from_tensor(
                        mid, eio.read_tensor(p).data, manifest.sensitivity, weights[mid]
                    )
                    for mid, p in zip(manifest.model_ids, mass_paths)
                ]
                for mass in masses:
                    evidence.validate_mass_map(mass, sign_routed=True, atol=VERIFY_TOLERANCE)
                refused = fusion.fuse_sequential(masses)
        except EngineError as exc:
            checks["refusion"] = float("inf")
            log.warning("refusion failed: %s", exc)
    if refused is not None:
        checks["refusion_belief"] = float(np.max(np.abs(refused.bel - bel)))
        checks["refusion_plausibility"] = float(np.max(np.abs(refused.pl - pl)))
        checks["duality"] = fusion.duality_check(refused)

    failed = {
        name: value
        for name, value in checks.items()
        if not np.isnan(value) and value > VERIFY_TOLERANCE
    }
    report = {"checks": checks, "failed": sorted(failed), "tolerance": VERIFY_TOLERANCE}
    if failed:
        worst = max(failed.items(), key=lambda kv: kv[1])
        raise InvariantViolation(
            f"verification failed for {out_dir}: {', '.join(sorted(failed))} "
            f"(worst {worst[0]} = {worst[1]:.3e})"
        )
    return report
