"""Independent reference implementations used only by the test suite.

Each oracle is written as naively as possible (plain loops, textbook
recursions, extended precision) so it shares no code with the library paths
it is checking.
"""

from __future__ import annotations

import numpy as np


def naive_basis_value(knots, degree, i, x):
    """Textbook recursive Cox-de Boor definition of B_{i,degree}(x).

    Half-open intervals, with the final interval closed on the right so the
    last knot itself is covered.
    """
    if degree == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        if i == len(knots) - 2 and x == knots[-1]:
            return 1.0
        return 0.0
    total = 0.0
    d1 = knots[i + degree] - knots[i]
    if d1 > 0:
        total += (x - knots[i]) / d1 * naive_basis_value(knots, degree - 1, i, x)
    d2 = knots[i + degree + 1] - knots[i + 1]
    if d2 > 0:
        total += (knots[i + degree + 1] - x) / d2 * naive_basis_value(
            knots, degree - 1, i + 1, x)
    return total


def naive_basis_deriv(knots, degree, i, x):
    """First derivative of B_{i,degree} via the degree-lowering formula."""
    if degree == 0:
        return 0.0
    total = 0.0
    d1 = knots[i + degree] - knots[i]
    if d1 > 0:
        total += degree / d1 * naive_basis_value(knots, degree - 1, i, x)
    d2 = knots[i + degree + 1] - knots[i + 1]
    if d2 > 0:
        total -= degree / d2 * naive_basis_value(knots, degree - 1, i + 1, x)
    return total


def naive_dense(x, w, b):
    """Triple-loop affine map: out[n, j] = sum_i x[n, i] w[i, j] + b[j]."""
    n, in_dim = x.shape
    out_dim = w.shape[1]
    out = np.zeros((n, out_dim))
    for row in range(n):
        for j in range(out_dim):
            acc = b[j]
            for i in range(in_dim):
                acc += x[row, i] * w[i, j]
            out[row, j] = acc
    return out


def naive_conv2d(x, kernel, bias, pad):
    """Six-deep loop convolution, stride 1, zero padding."""
    bsz, c_in, h, w = x.shape
    c_out, _, kh, kw = kernel.shape
    xp = np.zeros((bsz, c_in, h + 2 * pad, w + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + w] = x
    ho = h + 2 * pad - kh + 1
    wo = w + 2 * pad - kw + 1
    out = np.zeros((bsz, c_out, ho, wo))
    for n in range(bsz):
        for o in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    acc = bias[o]
                    for c in range(c_in):
                        for m in range(kh):
                            for q in range(kw):
                                acc += kernel[o, c, m, q] * xp[n, c, i + m, j + q]
                    out[n, o, i, j] = acc
    return out


def naive_maxpool(x, window):
    """Loop max-pool; pads with -inf when dims do not divide the window."""
    bsz, c, h, w = x.shape
    ho = -(-h // window)
    wo = -(-w // window)
    out = np.full((bsz, c, ho, wo), -np.inf)
    for n in range(bsz):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    for m in range(window):
                        for q in range(window):
                            ii, jj = i * window + m, j * window + q
                            if ii < h and jj < w:
                                out[n, ch, i, j] = max(out[n, ch, i, j],
                                                       x[n, ch, ii, jj])
    return out


def bce_extended_precision(probs, labels, clamp):
    """BCE via mpmath at 50 significant digits."""
    import mpmath

    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for p, y in zip(probs, labels):
            p = min(max(mpmath.mpf(float(p)), mpmath.mpf(float(clamp))),
                    1 - mpmath.mpf(float(clamp)))
            if y == 1:
                total += mpmath.log(p)
            else:
                total += mpmath.log(1 - p)
        return float(-total / len(labels))


def adamw_scalar_trajectory(theta0, grads, lr, beta1, beta2, eps, weight_decay):
    """Hand recurrence for a single scalar parameter over len(grads) steps."""
    theta = theta0
    m = 0.0
    v = 0.0
    out = []
    for step, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** step)
        v_hat = v / (1 - beta2 ** step)
        theta = theta - lr * (m_hat / (v_hat ** 0.5 + eps)) - lr * weight_decay * theta
        out.append(theta)
    return out


def brute_force_confusion(predicted, actual):
    """One-pass pairwise tally with attack (1) as the positive class."""
    tp = tn = fp = fn = 0
    for p, a in zip(predicted, actual):
        if p == 1 and a == 1:
            tp += 1
        elif p == 0 and a == 0:
            tn += 1
        elif p == 1 and a == 0:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


def brute_force_metrics(predicted, actual):
    """Accuracy/precision/recall/F1 straight from the raw sequences."""
    tp, tn, fp, fn = brute_force_confusion(predicted, actual)
    total = tp + tn + fp + fn
    acc = (tp + tn) / total
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return acc, prec, rec, f1
