"""Hot numeric inner loops, jitted by default (see :mod:`aerobench.accel`).

Everything in here works on plain floats and numpy arrays so the same
source runs through numba's nopython pipeline and as ordinary Python.
"""

import numpy as np

from .accel import maybe_njit


@maybe_njit
def quantize_mid_tread(theta, step):
    """Mid-tread quantizer: zero sits at the center of a level."""
    return step * np.rint(theta / step)


@maybe_njit
def safety_command(theta, omega, u_requested, theta_limit, band, safety_voltage):
    """Protective counter-voltage near the mechanical stops.

    Fires when the beam is inside ``band`` of a stop and still moving
    toward it; the returned voltage pushes away from the stop.
    """
    if theta > theta_limit - band and omega > 0.0:
        return -safety_voltage
    if theta < -(theta_limit - band) and omega < 0.0:
        return safety_voltage
    return u_requested


@maybe_njit
def rk4_step(theta, omega, u, dt, c_theta, c_omega, c_u, imbalance):
    """One classical RK4 step of the beam dynamics under constant voltage."""
    k1t = omega
    k1w = -c_omega * omega - c_theta * np.sin(theta) + c_u * u + imbalance
    t2 = theta + 0.5 * dt * k1t
    w2 = omega + 0.5 * dt * k1w
    k2t = w2
    k2w = -c_omega * w2 - c_theta * np.sin(t2) + c_u * u + imbalance
    t3 = theta + 0.5 * dt * k2t
    w3 = omega + 0.5 * dt * k2w
    k3t = w3
    k3w = -c_omega * w3 - c_theta * np.sin(t3) + c_u * u + imbalance
    t4 = theta + dt * k3t
    w4 = omega + dt * k3w
    k4t = w4
    k4w = -c_omega * w4 - c_theta * np.sin(t4) + c_u * u + imbalance
    theta_next = theta + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    omega_next = omega + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return theta_next, omega_next


@maybe_njit
def rollout_held_input(
    theta,
    omega,
    u_cmd,
    n_steps,
    dt,
    c_theta,
    c_omega,
    c_u,
    u_limit,
    theta_limit,
    imbalance,
    safety_on,
    safety_band,
    safety_voltage,
):
    """Advance ``n_steps`` internal RK4 steps under a held command voltage.

    The safety mechanism (when enabled) and the input saturation are
    re-evaluated every internal step; the inelastic stop clamp zeroes the
    angular velocity on contact.  Returns the new state and the number of
    steps the safety override was active.
    """
    events = 0
    for _ in range(n_steps):
        u = u_cmd
        if safety_on:
            u = safety_command(theta, omega, u_cmd, theta_limit, safety_band, safety_voltage)
            if u != u_cmd:
                events += 1
        if u > u_limit:
            u = u_limit
        elif u < -u_limit:
            u = -u_limit
        theta, omega = rk4_step(theta, omega, u, dt, c_theta, c_omega, c_u, imbalance)
        if theta > theta_limit:
            theta = theta_limit
            omega = 0.0
        elif theta < -theta_limit:
            theta = -theta_limit
            omega = 0.0
    return theta, omega, events


@maybe_njit
def simulate_recorded_input(
    theta0,
    omega0,
    u_samples,
    dt_sample,
    n_substeps,
    c_theta,
    c_omega,
    c_u,
    u_limit,
    theta_limit,
    imbalance,
):
    """Re-simulate the beam under a recorded voltage trace (ZOH per sample).

    No safety logic: the recorded voltage already is the applied one.
    Returns the state trajectory sampled at the record instants, i.e.
    ``theta[k], omega[k]`` is the state at time ``k * dt_sample`` (so row 0
    is the initial state and the final sample's input is not consumed).
    """
    n = u_samples.shape[0]
    thetas = np.empty(n)
    omegas = np.empty(n)
    dt = dt_sample / n_substeps
    theta = theta0
    omega = omega0
    for k in range(n):
        thetas[k] = theta
        omegas[k] = omega
        u = u_samples[k]
        if u > u_limit:
            u = u_limit
        elif u < -u_limit:
            u = -u_limit
        for _ in range(n_substeps):
            theta, omega = rk4_step(theta, omega, u, dt, c_theta, c_omega, c_u, imbalance)
            if theta > theta_limit:
                theta = theta_limit
                omega = 0.0
            elif theta < -theta_limit:
                theta = -theta_limit
                omega = 0.0
    return thetas, omegas


@maybe_njit
def fista_box(h, f, lower, upper, z0, lipschitz, tol, max_iter):
    """Accelerated projected gradient for ``min 0.5 z'Hz + f'z`` on a box.

    Momentum restarts whenever it points against descent.  Terminates on
    the unit-step projected-gradient fixed-point residual.  Returns
    ``(z, iterations, converged)``.
    """
    step = 1.0 / lipschitz
    z = np.minimum(np.maximum(z0, lower), upper)
    y = z.copy()
    t = 1.0
    for it in range(max_iter):
        g = h @ y + f
        z_new = np.minimum(np.maximum(y - step * g, lower), upper)
        g_new = h @ z_new + f
        resid = z_new - np.minimum(np.maximum(z_new - g_new, lower), upper)
        if np.max(np.abs(resid)) < tol:
            return z_new, it + 1, True
        if np.dot(y - z_new, z_new - z) > 0.0:
            t = 1.0
            y = z_new.copy()
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = z_new + ((t - 1.0) / t_next) * (z_new - z)
            t = t_next
        z = z_new
    return z, max_iter, False
