"""Acceptance suite: one check per published guarantee, with budgets.

Each test prints a single pass/fail line (run with ``pytest -s`` to see
them live). Known state: temperature_regimes asserts a winner-take-all
expected weight of 0.90 at T=0.1 for a counts=[85,90,92], V=100 panel;
the tempered posterior mean is bounded above by c_max/sum(c) ~= 0.345
for those counts at any temperature, so that clause cannot pass and the
test documents the gap rather than hiding it.
"""

import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import NOT_THETA, OMEGA, THETA, oracle_combine, oracle_mass
from evifuse import pipeline
from evifuse.evidence import attribution_from_tensor, attribution_to_mass, vacuous_mass
from evifuse.fixtures import BlobSpec, FixtureSpec, ModelSpec, write_fixture
from evifuse.fusion import EPSILON_CONFLICT, PixelMass, combine_pair, duality_check, fuse_sequential
from evifuse.io import load_manifest, read_tensor, write_tensor
from evifuse.reliability import expected_weights, sample_weights, tempered_posterior
from evifuse.render import BELIEF_GREEN, render_map, write_image


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL ({time.perf_counter() - start:.2f}s)")
        raise
    elapsed = time.perf_counter() - start
    print(f"[acceptance] {name}: PASS ({elapsed:.2f}s)")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s}s budget: {elapsed:.2f}s"


def squash(value, sensitivity, weight=1.0):
    amap = attribution_from_tensor("probe", 0, np.array([[value]], dtype=float))
    return attribution_to_mass(amap, weight, sensitivity).m_for[0, 0]


def test_bpa_analytic_anchors():
    with criterion("bpa_analytic_anchors", budget_s=1.0):
        assert abs(squash(0.02, 10.0) - math.tanh(0.2)) < 1e-9
        assert abs(squash(0.002, 500.0) - math.tanh(1.0)) < 1e-9
        assert abs(squash(0.02, 100.0) - math.tanh(2.0)) < 1e-9
        # Reference magnitudes the curve is calibrated against.
        assert abs(math.tanh(0.2) - 0.19738) < 5e-6
        assert math.tanh(1.0) > 0.75
        assert math.tanh(2.0) > 0.9


def test_mass_validity_bulk():
    with criterion("mass_validity_bulk", budget_s=5.0):
        rng = np.random.Generator(np.random.PCG64(1))
        n = 100_000
        values = rng.uniform(-0.5, 0.5, size=n)
        sensitivities = rng.uniform(0.1, 1000.0, size=n)
        weights = rng.uniform(0.0, 1.0, size=n)
        psi = np.tanh(sensitivities * values)
        m_for = weights * np.maximum(0.0, psi)
        m_against = weights * np.maximum(0.0, -psi)
        m_ign = 1.0 - (m_for + m_against)
        assert np.all(m_for >= 0) and np.all(m_against >= 0) and np.all(m_ign >= 0)
        assert float(np.max(np.abs(m_for + m_against + m_ign - 1.0))) < 1e-12
        # Spot-check the vectorized sweep against the engine op itself.
        for i in rng.integers(0, n, size=64):
            engine = squash(values[i], sensitivities[i], weights[i])
            assert abs(engine - m_for[i]) < 1e-15


def test_combination_oracle_equivalence():
    with criterion("combination_oracle_equivalence", budget_s=5.0):
        rng = np.random.Generator(np.random.PCG64(2))
        worst = 0.0
        for _ in range(10_000):
            f1, a1, _ = rng.dirichlet([1.0, 1.0, 1.0])
            f2, a2, _ = rng.dirichlet([1.0, 1.0, 1.0])
            a = PixelMass(f1, a1, 1.0 - f1 - a1)
            b = PixelMass(f2, a2, 1.0 - f2 - a2)
            fused, k = combine_pair(a, b)
            if 1.0 - k <= EPSILON_CONFLICT:
                continue
            ref, ref_k = oracle_combine(
                oracle_mass(a.m_for, a.m_against, a.m_ignorance),
                oracle_mass(b.m_for, b.m_against, b.m_ignorance),
            )
            worst = max(
                worst,
                abs(k - ref_k),
                abs(fused.m_for - ref[THETA]),
                abs(fused.m_against - ref[NOT_THETA]),
                abs(fused.m_ignorance - ref[OMEGA]),
            )
        assert worst < 1e-12


def _random_triples(rng, n):
    sample = rng.dirichlet([1.0, 1.0, 1.0], size=n)
    return [PixelMass(f, a, 1.0 - f - a) for f, a, _ in sample]


def test_algebraic_laws():
    with criterion("algebraic_laws", budget_s=10.0):
        rng = np.random.Generator(np.random.PCG64(3))
        vac = PixelMass(0.0, 0.0, 1.0)
        n = 10_000
        xs = _random_triples(rng, n)
        ys = _random_triples(rng, n)
        zs = _random_triples(rng, n)
        worst_comm = worst_assoc = 0.0
        for x, y, z in zip(xs, ys, zs):
            fused, k = combine_pair(vac, x)
            assert fused == x and k == 0.0

            xy, k_xy = combine_pair(x, y)
            yx, k_yx = combine_pair(y, x)
            worst_comm = max(
                worst_comm,
                abs(k_xy - k_yx),
                abs(xy.m_for - yx.m_for),
                abs(xy.m_against - yx.m_against),
                abs(xy.m_ignorance - yx.m_ignorance),
            )

            # Stay away from the total-conflict guard where the algebra
            # is deliberately cut off.
            yz, k_yz = combine_pair(y, z)
            if min(1.0 - k_xy, 1.0 - k_yz) < 1e-6:
                continue
            left, k_l = combine_pair(xy, z)
            right, k_r = combine_pair(x, yz)
            if min(1.0 - k_l, 1.0 - k_r) < 1e-6:
                continue
            worst_assoc = max(
                worst_assoc,
                abs(left.m_for - right.m_for),
                abs(left.m_against - right.m_against),
                abs(left.m_ignorance - right.m_ignorance),
            )
        assert worst_comm <= 1e-15
        assert worst_assoc <= 1e-12


def test_duality_over_full_images():
    with criterion("duality_over_full_images", budget_s=30.0):
        rng = np.random.Generator(np.random.PCG64(4))
        worst_duality = worst_gap = 0.0
        for run in range(100):
            n_models = int(rng.integers(2, 5))
            model_weights = rng.dirichlet(np.ones(n_models))
            masses = [
                attribution_to_mass(
                    attribution_from_tensor(
                        f"m{j}", 0, rng.standard_normal((128, 128)) * 0.02
                    ),
                    float(model_weights[j]),
                    100.0,
                )
                for j in range(n_models)
            ]
            maps = fuse_sequential(masses)
            worst_duality = max(worst_duality, duality_check(maps))
            worst_gap = max(
                worst_gap, float(np.max(np.abs(maps.unc - maps.fused_mass.m_ignorance)))
            )
        assert worst_duality < 1e-12
        assert worst_gap < 1e-12


def test_tempered_posterior_anchors():
    with criterion("tempered_posterior_anchors", budget_s=5.0):
        post = tempered_posterior([85, 90, 92], 5.0, [1.0, 1.0, 1.0])
        assert post.alpha.tolist() == [1.0 + 85 / 5.0, 1.0 + 90 / 5.0, 1.0 + 92 / 5.0]
        assert post.alpha.tolist() == [18.0, 19.0, 19.4]
        expected = expected_weights(post).w
        np.testing.assert_allclose(expected, [0.31915, 0.33688, 0.34397], atol=1e-5)
        mean = np.mean([sample_weights(post, seed).w for seed in range(10_000)], axis=0)
        assert float(np.max(np.abs(mean - expected))) < 0.01


def test_temperature_regimes():
    with criterion("temperature_regimes", budget_s=1.0):
        counts = np.array([85, 90, 92])  # V = 100 validation panel
        w_hot = expected_weights(tempered_posterior(counts, 100.0)).w
        assert float(np.max(np.abs(w_hot - 1.0 / 3.0))) < 0.02

        grid = np.geomspace(0.1, 100.0, 25)
        top = np.array(
            [expected_weights(tempered_posterior(counts, float(t))).w[2] for t in grid]
        )
        assert np.all(np.diff(top) < 0.0)
        assert int(np.argmax(expected_weights(tempered_posterior(counts, 0.1)).w)) == 2

        w_cold_top = expected_weights(tempered_posterior(counts, 0.1)).w[2]
        # Unreachable under alpha = 1 + c/T: the posterior mean tops out at
        # c_max/sum(c) = 92/267 ~= 0.3446 for this panel at any temperature.
        assert w_cold_top >= 0.90, (
            f"top expected weight at T=0.1 is {w_cold_top:.4f}; "
            "the tempered posterior mean cannot exceed c_max/sum(c) ~= 0.3446 "
            "for counts [85, 90, 92]"
        )


def _blob_fixture(tmp_path, name, *, conflict: bool):
    models = [
        ModelSpec("cnn", accuracy=0.85),
        ModelSpec("resnet", accuracy=0.90),
        ModelSpec("vit", accuracy=0.92),
    ]
    if conflict:
        models.append(ModelSpec("contrarian", accuracy=0.80, conflict_flip=True))
    spec = FixtureSpec(
        height=128,
        width=128,
        blobs=(BlobSpec(row=64, col=64, radius=12, amplitude=0.02),),
        models=tuple(models),
        seed=424242,
    )
    return write_fixture(spec, tmp_path / name)


def test_end_to_end_localization(tmp_path):
    with criterion("end_to_end_localization", budget_s=10.0):
        manifest = load_manifest(_blob_fixture(tmp_path, "clean", conflict=False))
        pipeline.run_pipeline(manifest)
        mask = read_tensor(tmp_path / "clean" / "blob_mask.npy").data.astype(bool)
        bel = read_tensor(os.path.join(manifest.output_dir, "bel.npy")).data
        unc = read_tensor(os.path.join(manifest.output_dir, "unc.npy")).data
        assert bel[mask].mean() >= 5.0 * bel[~mask].mean()
        assert unc[~mask].mean() >= 2.0 * unc[mask].mean()

        flipped = load_manifest(_blob_fixture(tmp_path, "flip", conflict=True))
        pipeline.run_pipeline(flipped)
        k_clean = read_tensor(os.path.join(manifest.output_dir, "conflict.npy")).data
        k_flip = read_tensor(os.path.join(flipped.output_dir, "conflict.npy")).data
        assert k_flip.mean() > k_clean.mean()


def test_reproducibility(tmp_path):
    with criterion("reproducibility", budget_s=30.0):
        manifest_path = _blob_fixture(tmp_path, "fix", conflict=False)
        base = load_manifest(manifest_path)
        runs = []
        for tag in ("a", "b"):
            m = base.with_overrides(seed=7, output_dir=str(tmp_path / tag))
            pipeline.run_pipeline(m, dump_masses=True)
            runs.append(m.output_dir)
        names = [
            "weights.json", "bel.npy", "pl.npy", "unc.npy", "conflict.npy",
            "mass_cnn.npy", "mass_resnet.npy", "mass_vit.npy",
            os.path.join("render", "bel.ppm"), os.path.join("render", "pl.ppm"),
            os.path.join("render", "unc.ppm"), os.path.join("render", "conflict.ppm"),
        ]
        for name in names:
            a = open(os.path.join(runs[0], name), "rb").read()
            b = open(os.path.join(runs[1], name), "rb").read()
            assert a == b, f"{name} differs between identical runs"


def test_format_round_trips(tmp_path):
    with criterion("format_round_trips", budget_s=5.0):
        rng = np.random.Generator(np.random.PCG64(10))
        for dtype in (np.float32, np.float64):
            for shape in ((16, 16), (8, 9, 3)):
                arr = rng.standard_normal(shape).astype(dtype)
                path = tmp_path / f"{dtype.__name__}_{len(shape)}.npy"
                write_tensor(path, arr)
                back = read_tensor(path)
                assert back.data.tobytes() == arr.tobytes()
                assert back.shape == shape

        image = render_map(rng.uniform(0, 1, (16, 16)), BELIEF_GREEN)
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        write_image(image, p1)
        write_image(image, p2)
        raw = p1.read_bytes()
        assert raw == p2.read_bytes()
        header_end = raw.index(b"255\n") + 4
        assert np.frombuffer(raw[header_end:], dtype=np.uint8).reshape(16, 16, 3).tobytes() == \
            image.pixels.tobytes()

        manifest_path = _blob_fixture(tmp_path, "fix", conflict=False)
        manifest = load_manifest(manifest_path)
        from evifuse.io import save_json

        save_json(tmp_path / "resolved.json", manifest.to_dict())
        again = load_manifest(tmp_path / "resolved.json")
        assert again == manifest
        save_json(tmp_path / "resolved2.json", again.to_dict())
        assert (tmp_path / "resolved2.json").read_bytes() == (tmp_path / "resolved.json").read_bytes()


def test_vacuous_epistemic_metrics():
    # Companion check: a vacuous source reads as total ignorance.
    maps = fuse_sequential([vacuous_mass((4, 4))])
    assert not maps.bel.any()
    assert np.all(maps.pl == 1.0)
    assert np.all(maps.unc == 1.0)
