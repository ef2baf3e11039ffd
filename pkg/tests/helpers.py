"""Shared test utilities: finite-difference gradient checking and fixtures."""

from __future__ import annotations

import numpy as np

from s2s.tensor import Tensor, no_grad


def numeric_gradient(f, arrays, index, h=1e-5):
    """Central-difference gradient of scalar f(*arrays) w.r.t. arrays[index]."""
    work = [np.array(a, dtype=np.float64) for a in arrays]
    grad = np.zeros_like(work[index])
    flat = work[index].reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(*work)
        flat[i] = orig - h
        fm = f(*work)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def analytic_gradients(build, arrays):
    """Backward pass of build(*tensors); returns per-input gradients."""
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True)
               for a in arrays]
    loss = build(*tensors)
    loss.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data)
            for t in tensors]


def assert_grads_match(build, arrays, tol=1e-4, h=1e-5):
    """Analytic vs central-difference gradients, elementwise relative error.

    Entries where both gradients are below 1e-7 in magnitude are compared
    absolutely instead (relative error is meaningless at zero).
    """
    analytic = analytic_gradients(build, arrays)

    def f(*arrs):
        with no_grad():
            return build(*[Tensor(a) for a in arrs]).item()

    for idx in range(len(arrays)):
        num = numeric_gradient(f, arrays, idx, h=h)
        ana = analytic[idx]
        scale = np.maximum(np.abs(ana), np.abs(num))
        big = scale > 1e-7
        if big.any():
            rel = np.abs(ana - num)[big] / scale[big]
            assert rel.max() <= tol, (
                f"input {idx}: max relative error {rel.max():.3e} > {tol}"
            )
        small_err = np.abs(ana - num)[~big]
        if small_err.size:
            assert small_err.max() <= 1e-7


def directional_gradient_check(build, params, rng, n_directions=8,
                               tol=1e-4, h=1e-5):
    """Gradient check along random directions for parameter-heavy nets.

    Compares the analytic directional derivative g . d against a central
    difference of the loss along d, for n_directions random unit vectors
    over the concatenated parameter vector.
    """
    loss = build()
    loss.backward()
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
             for p in params]
    originals = [p.data.copy() for p in params]

    def eval_loss():
        with no_grad():
            return build().item()

    for _ in range(n_directions):
        dirs = [rng.standard_normal(p.data.shape) for p in params]
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in dirs))
        dirs = [d / norm for d in dirs]
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
        for p, o, d in zip(params, originals, dirs):
            p.data = o + h * d
        fp = eval_loss()
        for p, o, d in zip(params, originals, dirs):
            p.data = o - h * d
        fm = eval_loss()
        for p, o in zip(params, originals):
            p.data = o
        numeric = (fp - fm) / (2.0 * h)
        scale = max(abs(analytic), abs(numeric), 1e-7)
        assert abs(analytic - numeric) / scale <= tol, (
            f"directional derivative mismatch: {analytic} vs {numeric}"
        )
    for p in params:
        p.grad = None


CUBE_OBJ = b"""\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


def icosphere(subdivisions=3, radius=1.0):
    """Subdivided icosahedron: (vertices, triangles) with outward winding."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts[0])
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.array(verts[i]) + np.array(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts, dtype=np.float64) * radius
    return v, np.array(faces, dtype=np.int64)
