"""Hamiltonian flows and action integrals for the smooth symbol part.

The flow of h = a2 + a1 carries phase-space points along

    dz/ds = (d_xi h, -d_x h)(z(s)),

and alongside each trajectory we accumulate the action

    psi(t, z) = INT_0^t  xi(s) . d_xi h(z(s)) - h(z(s))  ds

whose phase multiplies a moved atom. Integration is classical RK4 with
the action integrand sampled on the same stages (Simpson weights), so
the action converges at the same fourth order as the trajectory. For a
pure multiplier h = sigma(xi) the frequency is conserved and both the
trajectory and the action come out exact regardless of step size.

Everything is batched: z0 may be an (m, 2) block of lattice nodes and
one integration moves all of them.
"""

from dataclasses import dataclass

import numpy as np

from . import weyl


class BoxExitError(RuntimeError):
    """A trajectory left the phase box; carries the first exit time."""

    def __init__(self, time, box):
        self.time = float(time)
        self.box = box
        super().__init__(
            f"trajectory left the phase box |x| <= {box[0]}, |xi| <= {box[1]} "
            f"at t = {time:.6g}"
        )


def _flow_terms(model, x, xi):
    """Value and gradient of the flow Hamiltonian at points (x, xi)."""
    h = np.zeros_like(x)
    hx = np.zeros_like(x)
    hxi = np.zeros_like(x)
    for p in model.flow_parts():
        if isinstance(p, weyl.QuadraticPoly):
            gx, gxi = p.grad(x, xi)
            h = h + p.eval(x, xi)
            hx = hx + gx
            hxi = hxi + gxi
        elif isinstance(p, weyl.Multiplier):
            h = h + p.eval_xi(xi)
            hxi = hxi + p.dsigma(xi)
        elif isinstance(p, weyl.Potential):
            h = h + p.eval_x(x)
            hx = hx + p.dv(x)
        else:
            raise TypeError(
                f"cannot flow a {type(p).__name__} part; tag it 0 instead"
            )
    return h, hx, hxi


def _stage(symbol, t, z):
    model = symbol.at(t)
    x, xi = z[..., 0], z[..., 1]
    h, hx, hxi = _flow_terms(model, x, xi)
    vel = np.stack([hxi, -hx], axis=-1)
    return vel, xi * hxi - h


def _rk4_step(symbol, t, z, psi, dt):
    k1, q1 = _stage(symbol, t, z)
    k2, q2 = _stage(symbol, t + 0.5 * dt, z + 0.5 * dt * k1)
    k3, q3 = _stage(symbol, t + 0.5 * dt, z + 0.5 * dt * k2)
    k4, q4 = _stage(symbol, t + dt, z + dt * k3)
    z1 = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    psi1 = psi + (dt / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
    return z1, psi1


@dataclass
class FlowResult:
    """Trajectories, actions and gradients recorded at the requested times.

    traj[k, i] is node i at times[k]; action[k, i] the accumulated psi;
    grad_x / grad_xi hold the Hamiltonian gradient at each knot point
    (reused by the remainder-symbol construction).
    """

    times: np.ndarray
    traj: np.ndarray
    action: np.ndarray
    grad_x: np.ndarray
    grad_xi: np.ndarray

    @property
    def final(self):
        return self.traj[-1]

    @property
    def final_action(self):
        return self.action[-1]

    def to_csv(self, node=0):
        lines = ["t,x,xi,psi"]
        for k, t in enumerate(self.times):
            x, xi = self.traj[k, node]
            lines.append(f"{t:.12g},{x:.12g},{xi:.12g},{self.action[k, node]:.12g}")
        return "\n".join(lines) + "\n"


def integrate_flow(symbol, z0, times, substeps=4, box=None):
    """Flow the points z0 through the h = a2 + a1 flow along `times`.

    `times` is any monotone array starting at the initial time (backward
    runs are just decreasing times). Each recorded interval is cut into
    `substeps` RK4 steps; the stored knots are exactly the entries of
    `times`. With `box = (xmax, ximax)` the knots are checked against the
    phase box and the first exit raises BoxExitError.
    """
    z = np.atleast_2d(np.asarray(z0, dtype=np.float64)).copy()
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("need at least two time knots")
    psi = np.zeros(z.shape[:-1])
    traj = np.empty((len(times),) + z.shape)
    action = np.empty((len(times),) + psi.shape)
    grad_x = np.empty((len(times),) + psi.shape)
    grad_xi = np.empty((len(times),) + psi.shape)
    traj[0], action[0] = z, psi
    _, grad_x[0], grad_xi[0] = _flow_terms(symbol.at(times[0]), z[..., 0],
                                           z[..., 1])
    for i in range(len(times) - 1):
        dt = (times[i + 1] - times[i]) / substeps
        for s in range(substeps):
            z, psi = _rk4_step(symbol, times[i] + s * dt, z, psi, dt)
        if box is not None and (
            np.max(np.abs(z[..., 0])) > box[0]
            or np.max(np.abs(z[..., 1])) > box[1]
        ):
            raise BoxExitError(times[i + 1], box)
        traj[i + 1], action[i + 1] = z, psi
        _, grad_x[i + 1], grad_xi[i + 1] = _flow_terms(
            symbol.at(times[i + 1]), z[..., 0], z[..., 1]
        )
    return FlowResult(times=times, traj=traj, action=action,
                      grad_x=grad_x, grad_xi=grad_xi)


def flow_map(symbol, z0, t, nsteps=32, t0=0.0):
    """Endpoint of the flow from t0 to t (positions only)."""
    res = integrate_flow(symbol, z0, np.linspace(t0, t, nsteps + 1), substeps=1)
    return res.final


def inverse_flow(symbol, zt, t, nsteps=32):
    """Pull points at time t back to time 0 (positions only)."""
    return flow_map(symbol, zt, 0.0, nsteps=nsteps, t0=t)


def symplectic_defect(symbol, z0, t, nsteps=32, delta=1e-4):
    """Max |det D(flow) - 1| over the points, via central differences.

    The continuum flow is exactly symplectic; what this measures is the
    RK4 integration error, which should sit at the 1e-8 level for
    reasonable steps. Values near 1 mean the flow left the region where
    the sampled parts interpolate cleanly.
    """
    z0 = np.atleast_2d(np.asarray(z0, dtype=np.float64))
    m = z0.shape[0]
    offsets = delta * np.array(
        [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    )
    probes = (z0[None, :, :] + offsets[:, None, :]).reshape(-1, 2)
    zf = flow_map(symbol, probes, t, nsteps=nsteps).reshape(4, m, 2)
    ddx = (zf[0] - zf[1]) / (2.0 * delta)
    ddxi = (zf[2] - zf[3]) / (2.0 * delta)
    det = ddx[:, 0] * ddxi[:, 1] - ddx[:, 1] * ddxi[:, 0]
    return float(np.max(np.abs(det - 1.0)))
