"""Numba kernels for the hot inner loops.

Same contracts as ``_kernels_np``; explicit loops instead of BLAS so the
update order is fixed and runs are reproducible. Compiled lazily on first
call, cached on disk.
"""

from __future__ import annotations

import numpy as np
from numba import njit

EPS_NORM = 1e-12


@njit(cache=True)
def image_vectors(obj_mat, weights, obj_idx, scene_idx):
    m = scene_idx.shape[0]
    d = obj_mat.shape[1]
    out = np.zeros((m, d))
    for t in range(m):
        j = scene_idx[t]
        for q in range(obj_idx.shape[0]):
            i = obj_idx[q]
            w = weights[i, j]
            for c in range(d):
                out[t, c] += w * obj_mat[i, c]
    return out


@njit(cache=True)
def cosine_to_scenes(vecs, scene_mat, scene_idx):
    m = vecs.shape[0]
    d = vecs.shape[1]
    cos = np.zeros(m)
    defined = np.zeros(m, dtype=np.bool_)
    for t in range(m):
        j = scene_idx[t]
        dot = 0.0
        sv = 0.0
        ss = 0.0
        for c in range(d):
            dot += vecs[t, c] * scene_mat[j, c]
            sv += vecs[t, c] * vecs[t, c]
            ss += scene_mat[j, c] * scene_mat[j, c]
        nv = np.sqrt(sv)
        ns = np.sqrt(ss)
        if nv >= EPS_NORM and ns >= EPS_NORM:
            cos[t] = dot / (nv * ns)
            defined[t] = True
    return cos, defined


@njit(cache=True)
def _forward(obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx):
    k = neg_idx.shape[0]
    scene_idx = np.empty(1 + k, dtype=np.int64)
    scene_idx[0] = pos_idx
    for t in range(k):
        scene_idx[1 + t] = neg_idx[t]
    vecs = image_vectors(obj_mat, weights, obj_idx, scene_idx)
    cos, defined = cosine_to_scenes(vecs, scene_mat, scene_idx)
    return scene_idx, vecs, cos, defined


@njit(cache=True)
def hinge_forward(obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx, margin):
    scene_idx, vecs, cos, defined = _forward(
        obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx
    )
    loss = 0.0
    for t in range(neg_idx.shape[0]):
        term = margin - cos[0] + cos[1 + t]
        if term > 0.0:
            loss += term
    return loss


@njit(cache=True)
def hinge_backward(obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx, margin):
    a = obj_idx.shape[0]
    k = neg_idx.shape[0]
    d = obj_mat.shape[1]
    scene_idx, vecs, cos, defined = _forward(
        obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx
    )

    loss = 0.0
    n_active = 0
    coeff = np.zeros(1 + k)
    for t in range(k):
        term = margin - cos[0] + cos[1 + t]
        if term > 0.0:
            loss += term
            n_active += 1
            coeff[1 + t] = 1.0
    coeff[0] = -float(n_active)

    g_obj = np.zeros((a, d))
    g_scn = np.zeros((1 + k, d))
    g_wts = np.zeros((a, 1 + k))
    if n_active == 0:
        return loss, g_obj, g_scn, g_wts

    for t in range(1 + k):
        if coeff[t] == 0.0 or not defined[t]:
            continue
        j = scene_idx[t]
        sv = 0.0
        ss = 0.0
        for c in range(d):
            sv += vecs[t, c] * vecs[t, c]
            ss += scene_mat[j, c] * scene_mat[j, c]
        nv = np.sqrt(sv)
        ns = np.sqrt(ss)
        # g_v = coeff * (s/(|v||s|) - cos*v/|v|^2), g_s symmetric
        for c in range(d):
            gv_c = coeff[t] * (
                scene_mat[j, c] / (nv * ns) - cos[t] * vecs[t, c] / (nv * nv)
            )
            g_scn[t, c] = coeff[t] * (
                vecs[t, c] / (nv * ns) - cos[t] * scene_mat[j, c] / (ns * ns)
            )
            for q in range(a):
                i = obj_idx[q]
                g_wts[q, t] += obj_mat[i, c] * gv_c
                g_obj[q, c] += weights[i, j] * gv_c
    return loss, g_obj, g_scn, g_wts


@njit(cache=True)
def sgd_step(
    obj_mat,
    scene_mat,
    weights,
    obj_idx,
    pos_idx,
    neg_idx,
    margin,
    lr,
    weight_decay,
    update_objects,
    update_scenes,
    update_weights,
):
    loss, g_obj, g_scn, g_wts = hinge_backward(
        obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx, margin
    )
    if loss == 0.0:
        return loss, 0.0

    a = obj_idx.shape[0]
    k = neg_idx.shape[0]
    d = obj_mat.shape[1]
    max_delta = 0.0
    if update_objects:
        for q in range(a):
            i = obj_idx[q]
            for c in range(d):
                step = lr * (g_obj[q, c] + weight_decay * obj_mat[i, c])
                obj_mat[i, c] -= step
                if abs(step) > max_delta:
                    max_delta = abs(step)
    if update_scenes:
        for t in range(1 + k):
            j = pos_idx if t == 0 else neg_idx[t - 1]
            for c in range(d):
                step = lr * (g_scn[t, c] + weight_decay * scene_mat[j, c])
                scene_mat[j, c] -= step
                if abs(step) > max_delta:
                    max_delta = abs(step)
    if update_weights:
        for q in range(a):
            i = obj_idx[q]
            for t in range(1 + k):
                j = pos_idx if t == 0 else neg_idx[t - 1]
                old = weights[i, j]
                new = old - lr * (g_wts[q, t] + weight_decay * old)
                if new < 0.0:
                    new = 0.0
                weights[i, j] = new
                if abs(new - old) > max_delta:
                    max_delta = abs(new - old)
    return loss, max_delta
