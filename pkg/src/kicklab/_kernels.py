"""Compiled inner loop of the position-measurement update."""
import numba as nb
import numpy as np


@nb.njit(cache=True)
def measure_rows(psi, q0, dq, k, dt, dW, u, per, shift_limit, shifts, means, variances, drive):
    """Apply one measurement substep to every row of ``psi`` in place.

    Each row is multiplied by ``exp(-2k dt (q-m)**2 + sqrt(2k) (q-m) w)``,
    m = <q>, and renormalized.  The drive is ``w = dW + sqrt(8k) dt (q_J - m)``
    where grid point J is drawn from |psi|**2 by inverse CDF at ``u[r]``; this
    makes the outcome ``R = m + w / (sqrt(8k) dt)`` follow the exact Born
    density of the Gaussian Kraus operator.  ``u[r] < 0`` skips the draw
    (``w = dW``, outcome centred on <q>).  ``drive`` receives ``w``.

    The Gaussian weight is generated by the exact two-term multiplicative
    recurrence on the uniform grid instead of one ``exp`` per point.

    If ``per > 0`` and ``|m| > shift_limit`` the row is first rolled by a
    whole number of potential periods (``per`` points each) to bring the
    packet back to the box centre; ``shifts`` accumulates the period count.

    ``means`` receives <q> in the (possibly shifted) local frame.
    ``variances`` receives var(q) of each row before the update.
    """
    B, n = psi.shape
    w = np.empty(n)
    tmp = np.empty(n, dtype=psi.dtype)
    a = -2.0 * k * dt
    b = np.sqrt(2.0 * k)
    for r in range(B):
        s0 = 0.0
        s1 = 0.0
        for j in range(n):
            z = psi[r, j]
            pr = z.real * z.real + z.imag * z.imag
            s0 += pr
            s1 += pr * j
        m = q0 + dq * (s1 / s0)
        if per > 0 and abs(m) > shift_limit:
            s = int(np.rint(m / (dq * per)))
            sh = s * per
            for j in range(n):
                tmp[j] = psi[r, (j + sh) % n]
            for j in range(n):
                psi[r, j] = tmp[j]
            m -= sh * dq
            shifts[r] += s
        means[r] = m

        wr = dW[r]
        if u[r] >= 0.0:
            target = u[r] * s0
            acc = 0.0
            jb = n - 1
            for j in range(n):
                z = psi[r, j]
                acc += z.real * z.real + z.imag * z.imag
                if acc >= target:
                    jb = j
                    break
            wr += np.sqrt(8.0 * k) * dt * (q0 + jb * dq - m)
        drive[r] = wr
        c = b * wr
        # recurrence runs outward from the grid point nearest m, so the
        # weights underflow only far from the packet
        jc = min(max(int(np.rint((m - q0) / dq)), 0), n - 1)
        dc = q0 + jc * dq - m
        wc = np.exp(a * dc * dc + c * dc)
        growth = np.exp(2.0 * a * dq * dq)
        wj = wc
        ratio = np.exp(a * (2.0 * dc * dq + dq * dq) + c * dq)
        for j in range(jc, n):
            w[j] = wj
            wj *= ratio
            ratio *= growth
        wj = wc
        ratio = np.exp(a * (-2.0 * dc * dq + dq * dq) - c * dq)
        for j in range(jc - 1, -1, -1):
            wj *= ratio
            ratio *= growth
            w[j] = wj
        s2 = 0.0
        sq = 0.0
        for j in range(n):
            z = psi[r, j]
            pr = z.real * z.real + z.imag * z.imag
            d = q0 + j * dq - m
            sq += pr * d * d
            s2 += pr * w[j] * w[j]
        variances[r] = sq / s0
        f = 1.0 / np.sqrt(s2 * dq)
        for j in range(n):
            psi[r, j] *= w[j] * f
