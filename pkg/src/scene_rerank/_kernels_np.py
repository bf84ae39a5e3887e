"""Pure-numpy kernels: reference semantics for the hot inner loops.

The numba twins in ``_kernels_nb`` implement the identical math with explicit
loops; ``_kernels`` picks one set at import time. Everything here works on
plain float64/int64 arrays so both backends share one calling convention.
"""

from __future__ import annotations

import numpy as np

# Below this L2 norm a vector is degenerate: cosine against it is undefined
# and gradients through that cosine are taken as zero.
EPS_NORM = 1e-12


def image_vectors(obj_mat, weights, obj_idx, scene_idx):
    """Weighted object-vector sums, one row per candidate scene.

    Row m is sum_i weights[obj_idx[i], scene_idx[m]] * obj_mat[obj_idx[i]];
    the zero vector when obj_idx is empty.
    """
    m = scene_idx.shape[0]
    d = obj_mat.shape[1]
    if obj_idx.shape[0] == 0:
        return np.zeros((m, d))
    w_sel = weights[np.ix_(obj_idx, scene_idx)]  # (a, m)
    return w_sel.T @ obj_mat[obj_idx]


def cosine_to_scenes(vecs, scene_mat, scene_idx):
    """Cosine of each row of ``vecs`` against its scene vector.

    Returns (cos, defined); cos is 0 and defined False wherever either
    norm falls below EPS_NORM.
    """
    s_sel = scene_mat[scene_idx]
    dots = np.einsum("md,md->m", vecs, s_sel)
    nv = np.sqrt(np.einsum("md,md->m", vecs, vecs))
    ns = np.sqrt(np.einsum("md,md->m", s_sel, s_sel))
    defined = (nv >= EPS_NORM) & (ns >= EPS_NORM)
    denom = np.where(defined, nv * ns, 1.0)
    cos = np.where(defined, dots / denom, 0.0)
    return cos, defined


def _candidate_cosines(obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx):
    scene_idx = np.concatenate((np.asarray([pos_idx], dtype=np.int64), neg_idx))
    vecs = image_vectors(obj_mat, weights, obj_idx, scene_idx)
    cos, defined = cosine_to_scenes(vecs, scene_mat, scene_idx)
    return scene_idx, vecs, cos, defined


def hinge_forward(obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx, margin):
    """Sum over negatives of max(0, margin - cos_pos + cos_neg)."""
    _, _, cos, _ = _candidate_cosines(
        obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx
    )
    terms = margin - cos[0] + cos[1:]
    return float(np.sum(terms[terms > 0.0]))


def hinge_backward(obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx, margin):
    """Loss plus gradients for the touched parameter slices.

    Returns (loss, g_obj (a, d), g_scn (1+k, d), g_wts (a, 1+k)) where row 0
    of the scene axis is the positive. Terms at or below the hinge kink
    contribute nothing (zero-branch subgradient); degenerate cosines are
    constant zero, so nothing flows through them.
    """
    a = obj_idx.shape[0]
    k = neg_idx.shape[0]
    d = obj_mat.shape[1]
    scene_idx, vecs, cos, defined = _candidate_cosines(
        obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx
    )
    terms = margin - cos[0] + cos[1:]
    active = terms > 0.0
    loss = float(np.sum(terms[active]))

    g_obj = np.zeros((a, d))
    g_scn = np.zeros((1 + k, d))
    g_wts = np.zeros((a, 1 + k))
    if not np.any(active):
        return loss, g_obj, g_scn, g_wts

    coeff = np.empty(1 + k)  # dL/dcos per candidate
    coeff[0] = -float(np.sum(active))
    coeff[1:] = active.astype(np.float64)

    s_sel = scene_mat[scene_idx]
    nv = np.sqrt(np.einsum("md,md->m", vecs, vecs))
    ns = np.sqrt(np.einsum("md,md->m", s_sel, s_sel))
    live = defined & (coeff != 0.0)
    nv_safe = np.where(live, nv, 1.0)
    ns_safe = np.where(live, ns, 1.0)

    # d cos / d v = s/(|v||s|) - cos * v/|v|^2 ; symmetric in s.
    g_v = s_sel / (nv_safe * ns_safe)[:, None] - (cos / nv_safe**2)[:, None] * vecs
    g_s = vecs / (nv_safe * ns_safe)[:, None] - (cos / ns_safe**2)[:, None] * s_sel
    g_v *= (coeff * live)[:, None]
    g_s *= (coeff * live)[:, None]
    g_scn = g_s

    if a > 0:
        g_wts = obj_mat[obj_idx] @ g_v.T  # (a, 1+k)
        w_sel = weights[np.ix_(obj_idx, scene_idx)]  # (a, 1+k)
        g_obj = w_sel @ g_v  # (a, d)
    return loss, g_obj, g_scn, g_wts


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
    """One in-place SGD update from a single example.

    Examples with no active hinge term leave every parameter bitwise
    untouched. Updated weight entries are clamped at zero. Returns
    (loss, max |actual parameter change|).
    """
    loss, g_obj, g_scn, g_wts = hinge_backward(
        obj_mat, scene_mat, weights, obj_idx, pos_idx, neg_idx, margin
    )
    if loss == 0.0:
        return loss, 0.0

    max_delta = 0.0
    if update_objects and obj_idx.shape[0] > 0:
        step = lr * (g_obj + weight_decay * obj_mat[obj_idx])
        obj_mat[obj_idx] -= step
        if step.size:
            max_delta = max(max_delta, float(np.max(np.abs(step))))
    if update_scenes:
        scene_idx = np.concatenate(
            (np.asarray([pos_idx], dtype=np.int64), neg_idx)
        )
        step = lr * (g_scn + weight_decay * scene_mat[scene_idx])
        scene_mat[scene_idx] -= step
        if step.size:
            max_delta = max(max_delta, float(np.max(np.abs(step))))
    if update_weights and obj_idx.shape[0] > 0:
        scene_idx = np.concatenate(
            (np.asarray([pos_idx], dtype=np.int64), neg_idx)
        )
        sel = np.ix_(obj_idx, scene_idx)
        old = weights[sel]
        new = old - lr * (g_wts + weight_decay * old)
        np.maximum(new, 0.0, out=new)
        weights[sel] = new
        delta = np.abs(new - old)
        if delta.size:
            max_delta = max(max_delta, float(np.max(delta)))
    return loss, max_delta
