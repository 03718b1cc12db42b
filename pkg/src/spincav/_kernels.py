"""Compiled numerical kernels: mean-field right-hand sides and a
Dormand-Prince 5(4) adaptive integrator on the flat real state vector.

State layout (dimension 2 + 3N): [Re a, Im a, Re s1, Im s1, ..., Re sN,
Im sN, sz1, ..., szN].  The same kernel serves the full collective model
(cavity driven by the coupling sum and the laser) and the effective local
model (decoupled cavity, per-spin effective rates) via the ``collective``
flag and the per-spin relaxation-rate array.

Steps are clipped to land exactly on requested sample times, so no dense
interpolation error enters sampled trajectories.  fastmath stays off so
results are bit-reproducible across thread counts.
"""
import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2

_MAX_STEPS = 200_000_000


@njit(cache=True, nogil=True)
def rhs_flat(y, dy, delta_c, kappa, drive, deltas, gs, gammas, collective):
    """Mean-field equations of motion on the flat real state vector.

    ``drive`` is sqrt(kappa_c) * beta_in (zero with the laser off).  With
    ``collective`` the cavity feels the coupling sum -i sum_j g_j s_-^j;
    without it the cavity is the decoupled, freely decaying mean field of
    the local model.
    """
    n = deltas.size
    ar = y[0]
    ai = y[1]
    sum_r = 0.0
    sum_i = 0.0
    if collective:
        for j in range(n):
            sum_r += gs[j] * y[2 + 2 * j]
            sum_i += gs[j] * y[3 + 2 * j]
    # da/dt = -(i delta_c + kappa/2) a - i sum_j g_j s_-^j - drive
    dy[0] = -0.5 * kappa * ar + delta_c * ai + sum_i - drive
    dy[1] = -0.5 * kappa * ai - delta_c * ar - sum_r
    for j in range(n):
        sr = y[2 + 2 * j]
        si = y[3 + 2 * j]
        sz = y[2 + 2 * n + j]
        g = gs[j]
        d = deltas[j]
        gam = gammas[j]
        # ds/dt = -(i delta_j + gamma_j/2) s + i g a sz
        dy[2 + 2 * j] = -0.5 * gam * sr + d * si - g * ai * sz
        dy[3 + 2 * j] = -0.5 * gam * si - d * sr + g * ar * sz
        # dsz/dt = -4 g Im(a* s) - gamma_j (1 + sz)
        dy[2 + 2 * n + j] = -4.0 * g * (ar * si - ai * sr) - gam * (1.0 + sz)


@njit(cache=True, nogil=True)
def integrate_flat(y0, t0, t_end, sample_times, rtol, atol,
                   delta_c, kappa, drive, deltas, gs, gammas, collective):
    """Adaptive Dormand-Prince 5(4) integration with exact-hit sampling.

    Returns (samples, y_final, status, t_fail).  ``sample_times`` must be
    non-decreasing and lie within [t0, t_end].
    """
    dim = y0.size
    ns = sample_times.size
    samples = np.empty((ns, dim))

    y = y0.copy()
    ynew = np.empty(dim)
    yerr = np.empty(dim)
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    k5 = np.empty(dim)
    k6 = np.empty(dim)
    k7 = np.empty(dim)
    ytmp = np.empty(dim)

    t = t0
    si = 0
    while si < ns and sample_times[si] <= t:
        samples[si] = y
        si += 1

    rhs_flat(y, k1, delta_c, kappa, drive, deltas, gs, gammas, collective)
    h = min(1e-3, t_end - t0) if t_end > t0 else 0.0
    status = STATUS_OK
    t_fail = 0.0
    steps = 0

    while t < t_end:
        steps += 1
        if steps > _MAX_STEPS:
            status = STATUS_MAX_STEPS
            t_fail = t
            break
        if h < 1e-12 * max(1.0, abs(t)):
            status = STATUS_STEP_UNDERFLOW
            t_fail = t
            break
        # clip the step onto the next sample time / the interval end
        h_try = h
        clipped = False
        if t + h_try >= t_end:
            h_try = t_end - t
            clipped = True
        if si < ns and t + h_try >= sample_times[si]:
            h_try = sample_times[si] - t
            clipped = True
        if h_try <= 0.0:
            h_try = 1e-14 * max(1.0, abs(t))

        # Dormand-Prince stages (FSAL: k1 carries over from the last accept)
        for i in range(dim):
            ytmp[i] = y[i] + h_try * (0.2 * k1[i])
        rhs_flat(ytmp, k2, delta_c, kappa, drive, deltas, gs, gammas, collective)
        for i in range(dim):
            ytmp[i] = y[i] + h_try * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
        rhs_flat(ytmp, k3, delta_c, kappa, drive, deltas, gs, gammas, collective)
        for i in range(dim):
            ytmp[i] = y[i] + h_try * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i]
                                      + 32.0 / 9.0 * k3[i])
        rhs_flat(ytmp, k4, delta_c, kappa, drive, deltas, gs, gammas, collective)
        for i in range(dim):
            ytmp[i] = y[i] + h_try * (19372.0 / 6561.0 * k1[i] - 25360.0 / 2187.0 * k2[i]
                                      + 64448.0 / 6561.0 * k3[i] - 212.0 / 729.0 * k4[i])
        rhs_flat(ytmp, k5, delta_c, kappa, drive, deltas, gs, gammas, collective)
        for i in range(dim):
            ytmp[i] = y[i] + h_try * (9017.0 / 3168.0 * k1[i] - 355.0 / 33.0 * k2[i]
                                      + 46732.0 / 5247.0 * k3[i] + 49.0 / 176.0 * k4[i]
                                      - 5103.0 / 18656.0 * k5[i])
        rhs_flat(ytmp, k6, delta_c, kappa, drive, deltas, gs, gammas, collective)
        for i in range(dim):
            ynew[i] = y[i] + h_try * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i]
                                      + 125.0 / 192.0 * k4[i] - 2187.0 / 6784.0 * k5[i]
                                      + 11.0 / 84.0 * k6[i])
        rhs_flat(ynew, k7, delta_c, kappa, drive, deltas, gs, gammas, collective)
        # embedded 4th-order error estimate
        err = 0.0
        for i in range(dim):
            e = h_try * (71.0 / 57600.0 * k1[i] - 71.0 / 16695.0 * k3[i]
                         + 71.0 / 1920.0 * k4[i] - 17253.0 / 339200.0 * k5[i]
                         + 22.0 / 525.0 * k6[i] - 1.0 / 40.0 * k7[i])
            scale = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e /= scale
            err += e * e
        err = np.sqrt(err / dim)

        if err <= 1.0:
            t = t + h_try
            for i in range(dim):
                y[i] = ynew[i]
                k1[i] = k7[i]
            while si < ns and sample_times[si] <= t:
                samples[si] = y
                si += 1
            if err == 0.0:
                factor = 5.0
            else:
                factor = min(5.0, max(0.2, 0.9 * err ** -0.2))
            if clipped:
                # do not let a clipped (shortened) step throttle the next one
                h = max(h, h_try * factor)
            else:
                h = h_try * factor
        else:
            h = h_try * max(0.2, 0.9 * err ** -0.2)

    if status == STATUS_OK:
        while si < ns:
            samples[si] = y
            si += 1
    return samples, y, status, t_fail
