"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""

import math
import os
import statistics
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from meshcvae import shapes
from meshcvae.filters import BilateralConfig, VertexUpdateConfig, bilateral_filter, update_vertices
from meshcvae.meshio import save_mesh
from meshcvae.metrics import normal_angle_alpha, one_sided_distance
from meshcvae.modelio import save_model
from meshcvae.neural import (
    TrainConfig, binary_cross_entropy, cvae_loss, cvae_loss_and_gradients, draw_masks, init_cvae, kl_divergence,
)
from meshcvae.noise import NoiseSpec, add_gaussian_noise
from meshcvae.patch import build_patch, build_patches, encode_descriptor
from meshcvae.pipeline import DenoiseConfig, build_training_set, denoise, train_bundle

from test_neural import kink_margin

# desk-scale training settings shared by criteria 5, 7 and 8
DESK_TRAIN = TrainConfig(learning_rate=1e-3, epochs=30, enc_widths=(256, 256), dec_widths=(256, 256),
                         latent_dim=64, batch_size=256, seed=0)
NOISE = NoiseSpec(0.0, 0.1, 100)


def report(capsys, number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} {title}: {detail}"
    with capsys.disabled():
        print("\n" + line)
    return ok


# --- 1 -----------------------------------------------------------------------


def test_1_descriptor_invariance(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mesh = add_gaussian_noise(shapes.icosphere(4), NoiseSpec(0, 0.1, 1))
    faces = rng.choice(mesh.n_faces, 100, replace=False)
    n = 20
    base = np.array([encode_descriptor(build_patch(mesh, mesh.adjacency, f, n)).values for f in faces])

    rigid = 0.0
    for _ in range(20):
        R = shapes.random_rotation(rng)
        moved = mesh.with_vertices(mesh.vertices @ R.T + rng.uniform(-10, 10, size=3))
        adj = moved.adjacency
        d = np.array([encode_descriptor(build_patch(moved, adj, f, n)).values for f in faces])
        rigid = max(rigid, np.abs(d - base).max())
    scale = 0.0
    for s in (0.1, 10.0):
        sm = mesh.with_vertices(mesh.vertices * s)
        d = np.array([encode_descriptor(build_patch(sm, sm.adjacency, f, n)).values for f in faces])
        scale = max(scale, np.abs(d - base).max())
    dt = time.perf_counter() - t0
    ok = rigid < 1e-5 and scale < 1e-6 and dt < 10
    assert report(capsys, 1, "descriptor invariance",
                  ok, f"rigid max dev {rigid:.2e} (<1e-5), scale max dev {scale:.2e} (<1e-6), {dt:.2f}s (<10s)")


# --- 2 -----------------------------------------------------------------------


def _fd_worst(p, x, t, y, noise, masks, h=1e-4):
    _, g, _ = cvae_loss_and_gradients(p, x, t, y, noise, masks)
    worst = 0.0
    for k, w in p.weights.items():
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = cvae_loss(p, x, t, y, noise, masks)
            w[idx] = old - h
            dn = cvae_loss(p, x, t, y, noise, masks)
            w[idx] = old
            num = (up - dn) / (2 * h)
            worst = max(worst, abs(g[k][idx] - num) / max(abs(g[k][idx]), abs(num), 1e-6))
    return worst


def test_2_gradient_oracle(capsys):
    t0 = time.perf_counter()
    worst, redraws = 0.0, 0
    for net in range(20):
        rng = np.random.default_rng(net)
        widths = tuple(int(w) for w in rng.integers(2, 9, size=4))
        p = init_cvae(9, 3, 2, widths[:2], widths[2:], 0.9, "relu", rng)
        for k in p.weights:
            p.weights[k] += 0.1 * rng.normal(size=p.weights[k].shape)
        B = 4
        while True:
            # central differences are undefined across a relu kink: redraw the
            # batch if any hidden pre-activation is within 10 steps of zero
            x, t = rng.uniform(size=(B, 9)), rng.uniform(size=(B, 9))
            y = np.eye(3)[rng.integers(0, 3, size=B)]
            noise = rng.normal(size=(B, 2))
            masks = draw_masks(p, B, rng)
            if kink_margin(p, x, y, noise, masks) > 1e-3:
                break
            redraws += 1
        worst = max(worst, _fd_worst(p, x, t, y, noise, masks))
    dt = time.perf_counter() - t0
    ok = worst < 1e-3 and dt < 60
    assert report(capsys, 2, "gradient oracle", ok,
                  f"max relative error {worst:.2e} over 20 nets (<1e-3), {redraws} kink redraws, {dt:.1f}s (<60s)")


# --- 3 -----------------------------------------------------------------------


def test_3_loss_identities(capsys):
    kl0 = kl_divergence(np.zeros(5), np.zeros(5))[0]
    kl1 = kl_divergence(np.array([1.0]), np.array([0.0]))[0]
    L = 63
    bce = binary_cross_entropy(np.full(L, 0.5), np.full(L, 0.5))[0]
    ok = kl0 == 0.0 and kl1 == 0.5 and abs(bce - L * math.log(2)) <= 1e-12
    assert report(capsys, 3, "loss identities", ok,
                  f"KL(0,0)={float(kl0)!r}, KL((1),(0))={float(kl1)!r}, |BCE - L ln2|={abs(bce - L * math.log(2)):.1e}")


# --- 4 -----------------------------------------------------------------------


def test_4_filter_fixed_points(capsys):
    g = shapes.grid(20, 20)
    ps = build_patches(g, g.adjacency, 20)
    nb = np.full((g.n_faces, 21), -1, dtype=np.int64)
    rows = np.flatnonzero(ps.valid)
    nb[rows] = ps.faces(rows)
    normals = bilateral_filter(g, g.face_normals, nb, BilateralConfig(iterations=8))
    dn = np.abs(normals - g.face_normals).max()
    out = update_vertices(g, g.adjacency, normals, VertexUpdateConfig(20))
    dv = np.abs(out.vertices - g.vertices).max()
    ok = dn <= 1e-9 and dv <= 1e-9
    assert report(capsys, 4, "filter fixed points", ok,
                  f"{g.n_faces} faces, bilateral N_B=8 max normal change {dn:.1e}, "
                  f"vertex update N_V=20 max move {dv:.1e} (<=1e-9)")


# --- 5 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_bundle():
    t0 = time.perf_counter()
    train = [shapes.uv_sphere(30, 60), shapes.cube(12), shapes.cylinder(40, 20), shapes.torus(48, 24)]
    ts, km = build_training_set(train, NOISE, n=8, K=20, seed=0)
    bundle = train_bundle(ts, km, DenoiseConfig(n=8, K=20), DESK_TRAIN, noise=NOISE)
    return bundle, [m.n_faces for m in train], time.perf_counter() - t0


def test_5_end_to_end_efficacy(capsys, desk_bundle):
    bundle, sizes, train_time = desk_bundle
    t0 = time.perf_counter()
    clean = shapes.icosphere(4)
    noisy = add_gaussian_noise(clean, NoiseSpec(0.0, 0.1, 999))
    out = denoise(noisy, bundle).mesh
    a0, a1 = normal_angle_alpha(noisy, clean)[0], normal_angle_alpha(out, clean)[0]
    d0, d1 = one_sided_distance(noisy, clean)[0], one_sided_distance(out, clean)[0]
    ra, rd = 1 - a1 / a0, 1 - d1 / d0
    dt = train_time + time.perf_counter() - t0
    ok = ra >= 0.40 and rd >= 0.30 and dt < 15 * 60
    assert report(capsys, 5, "end-to-end efficacy", ok,
                  f"train faces {sizes}, alpha {a0:.3f}->{a1:.3f} deg ({ra:.1%} >= 40%), "
                  f"distance {d0:.5f}->{d1:.5f} ({rd:.1%} >= 30%), {dt:.0f}s (<900s)")


# --- 6 -----------------------------------------------------------------------


def test_6_oracle_normals(capsys):
    clean = shapes.icosphere(4)
    noisy = add_gaussian_noise(clean, NoiseSpec(0.0, 0.1, 999))
    out = update_vertices(noisy, noisy.adjacency, clean.face_normals, VertexUpdateConfig(20))
    d0, d1 = one_sided_distance(noisy, clean)[0], one_sided_distance(out, clean)[0]
    r = 1 - d1 / d0
    assert report(capsys, 6, "oracle-normals sanity", r >= 0.5,
                  f"distance {d0:.5f}->{d1:.5f} ({r:.1%} >= 50%)")


# --- 7 -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def mesh_100k():
    m = add_gaussian_noise(shapes.torus(500, 100), NoiseSpec(0.0, 0.1, 7))
    assert m.n_faces == 100_000
    return m


def test_7_parallel_scaling(capsys, desk_bundle, mesh_100k):
    bundle = desk_bundle[0]
    totals, outputs = {}, {}
    for t in (1, 4):
        cfg = replace(bundle.config, threads=t)
        times = []
        for _ in range(20):
            fresh = mesh_100k.with_vertices(mesh_100k.vertices)
            res = denoise(fresh, bundle, cfg)
            times.append(sum(res.timings.values()))
            outputs.setdefault(t, res.mesh)
        totals[t] = statistics.fmean(times)
    speedup = totals[1] / totals[4]
    same = save_mesh(outputs[1], "off") == save_mesh(outputs[4], "off")
    ok = speedup >= 2.0 and same
    assert report(capsys, 7, "parallel scaling", ok,
                  f"100000 faces, mean {totals[1]:.3f}s @1 thread vs {totals[4]:.3f}s @4 threads, "
                  f"speedup {speedup:.2f}x (>=2.0x), bitwise identical={same}, cpu_count={os.cpu_count()}")


# --- 8 -----------------------------------------------------------------------


def test_8_constant_cost_per_face(capsys, desk_bundle, mesh_100k):
    bundle = desk_bundle[0]
    m10k = add_gaussian_noise(shapes.torus(100, 50), NoiseSpec(0.0, 0.1, 7))
    assert m10k.n_faces == 10_000
    per_face = {}
    for m in (m10k, mesh_100k):
        samples = [denoise(m.with_vertices(m.vertices), bundle).timings["inference"] / m.n_faces
                   for _ in range(7)]
        per_face[m.n_faces] = statistics.median(samples)
    a, b = per_face[10_000], per_face[100_000]
    diff = abs(a - b) / min(a, b)
    assert report(capsys, 8, "O(1) per face", diff < 0.25,
                  f"inference {a * 1e6:.2f} us/face @10k vs {b * 1e6:.2f} us/face @100k, "
                  f"difference {diff:.1%} (<25%)")


# --- 9 -----------------------------------------------------------------------


def _full_run():
    noise = NoiseSpec(0.0, 0.1, 42)
    ts, km = build_training_set([shapes.uv_sphere(16, 32), shapes.cube(6)], noise, n=8, K=5, seed=42)
    tc = TrainConfig(learning_rate=1e-3, epochs=2, enc_widths=(64, 64), dec_widths=(64, 64),
                     latent_dim=16, seed=42)
    bundle = train_bundle(ts, km, DenoiseConfig(n=8, K=5), tc, noise=noise)
    target = add_gaussian_noise(shapes.icosphere(3), NoiseSpec(0.0, 0.1, 43))
    return save_model(bundle), save_mesh(denoise(target, bundle).mesh, "obj")


def test_9_determinism(capsys):
    m1, o1 = _full_run()
    m2, o2 = _full_run()
    ok = m1 == m2 and o1 == o2
    assert report(capsys, 9, "determinism", ok,
                  f"model file identical={m1 == m2} ({len(m1)} bytes), output mesh identical={o1 == o2}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
