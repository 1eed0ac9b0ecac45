"""Training losses, the FIFO embedding bank, and the EMA parameter tracker."""

from collections import deque

import numpy as np


def l1_loss(pred, target):
    """Mean absolute error and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    grad = np.sign(diff) / diff.size
    return float(np.abs(diff).mean()), grad.astype(pred.dtype)


def directional_loss(feat_student, feat_teacher, eps=1e-8):
    """Per-location cosine misalignment between two feature maps.

    Accepts (C, H, W) or batched (B, C, H, W); returns the mean of
    1 - CosSim over all spatial locations (and batch) plus the gradient
    with respect to the student features. The teacher is a constant.
    """
    a = np.asarray(feat_student)
    b = np.asarray(feat_teacher)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    squeeze = a.ndim == 3
    if squeeze:
        a = a[None]
        b = b[None]
    if a.ndim != 4:
        raise ValueError(f"expected (C, H, W) or (B, C, H, W), got {feat_student.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("directional loss inputs contain NaN or Inf")

    norm_a = np.sqrt((a * a).sum(axis=1, keepdims=True))
    norm_b = np.sqrt((b * b).sum(axis=1, keepdims=True))
    dot = (a * b).sum(axis=1, keepdims=True)
    denom = np.maximum(norm_a * norm_b, eps)
    cos = dot / denom
    n_loc = a.shape[0] * a.shape[2] * a.shape[3]
    loss = float((1.0 - cos).sum() / n_loc)

    # d cos/d a = b/denom - cos * a / norm_a^2 wherever the true product
    # exceeds eps; below it the denominator is the constant eps.
    exceeded = (norm_a * norm_b) > eps
    safe_norm_a_sq = np.maximum(norm_a * norm_a, np.finfo(a.dtype).tiny)
    d_cos = b / denom - np.where(exceeded, cos * a / safe_norm_a_sq, 0.0)
    grad = (-d_cos / n_loc).astype(a.dtype)
    if squeeze:
        grad = grad[0]
    return loss, grad


def contrastive_loss(emb_student, emb_teacher, bank, tau=1.0, include_positive=True):
    """InfoNCE over band-pass embeddings with bank entries as negatives.

    By default the positive logit also appears in the denominator (keeps the
    loss non-negative); ``include_positive=False`` reproduces a ratio whose
    denominator sums over the bank only. Empty bank -> loss 0 by convention.
    """
    z_s = np.asarray(emb_student, dtype=np.float64)
    z_t = np.asarray(emb_teacher, dtype=np.float64)
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if z_s.shape != z_t.shape or z_s.ndim != 1:
        raise ValueError(f"embedding shape mismatch {z_s.shape} vs {z_t.shape}")
    negatives = bank.as_matrix()
    if negatives is None:
        return 0.0, np.zeros_like(emb_student)
    if negatives.shape[1] != z_s.shape[0]:
        raise ValueError(
            f"bank embedding length {negatives.shape[1]} != sample length {z_s.shape[0]}"
        )
    pos_logit = float(z_s @ z_t) / tau
    neg_logits = (negatives @ z_s) / tau
    if include_positive:
        logits = np.concatenate(([pos_logit], neg_logits))
        shift = logits.max()
        weights = np.exp(logits - shift)
        total = weights.sum()
        loss = float(np.log(total) + shift - pos_logit)
        probs = weights / total
        grad = (probs[0] - 1.0) * z_t / tau + (probs[1:, None] * negatives).sum(axis=0) / tau
    else:
        shift = neg_logits.max()
        weights = np.exp(neg_logits - shift)
        total = weights.sum()
        loss = float(np.log(total) + shift - pos_logit)
        probs = weights / total
        grad = -z_t / tau + (probs[:, None] * negatives).sum(axis=0) / tau
    return loss, grad.astype(np.asarray(emb_student).dtype)


class MemoryBank:
    """Fixed-capacity FIFO queue of detached embedding vectors."""

    def __init__(self, capacity=300):
        if capacity < 1:
            raise ValueError("bank capacity must be positive")
        self.capacity = capacity
        self._queue = deque(maxlen=capacity)

    def __len__(self):
        return len(self._queue)

    def push(self, embeddings):
        """Append embeddings (iterable of vectors or a 2-D array) in order."""
        for emb in embeddings:
            emb = np.asarray(emb)
            if emb.ndim != 1:
                raise ValueError("bank entries must be 1-D vectors")
            if self._queue and self._queue[0].shape != emb.shape:
                raise ValueError("bank entries must share one embedding length")
            self._queue.append(emb.copy())

    def as_matrix(self):
        if not self._queue:
            return None
        return np.stack(self._queue, axis=0)


class EmaTracker:
    """Keeps a teacher array set as an exponential moving average of a
    same-named student set; covers parameters and running statistics."""

    def __init__(self, teacher_arrays, momentum=0.9):
        if not 0.0 <= momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        self.momentum = momentum
        self.teacher_arrays = dict(teacher_arrays)

    def update(self, student_arrays):
        if set(student_arrays) != set(self.teacher_arrays):
            raise ValueError("teacher and student array names differ")
        m = self.momentum
        for name, student in student_arrays.items():
            teacher = self.teacher_arrays[name]
            if teacher.shape != student.shape:
                raise ValueError(f"shape mismatch for {name}")
            teacher *= m
            teacher += (1.0 - m) * student
