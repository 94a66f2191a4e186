"""Closed-loop pouring trajectories.

Both generators run the same loop. At step ``t`` the velocity network
reads ``[theta_t, f_t, z]`` and its output is integrated into
``theta_{t+1}``; the stop network reads the same frame; the force for
``theta_{t+1}`` is then obtained, and the loop ends if the stop class won.
``generate_live`` takes forces from any force source (e.g. the fill oracle);
``generate_simulated`` takes them from a trained ``frc`` network.
"""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .networks import Stepper

STOPPED = "stopped_by_stp"
HIT_MAX = "hit_max_steps"


class GenerationError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass
class GeneratedTrajectory:
    theta: np.ndarray
    omega: np.ndarray
    force: np.ndarray
    p_stop: np.ndarray
    termination: str

    @property
    def steps(self):
        return self.omega.size


class NetworkForce:
    """Force source backed by a ``frc`` network with its own recurrent state."""

    def __init__(self, frc):
        if frc.kind != "frc":
            raise ValueError(f"expected a frc network, got {frc.kind}")
        self.stepper = Stepper(frc)
        self.started = False

    def __call__(self, theta, z):
        x = np.concatenate([[theta], np.asarray(z, dtype=np.float64)])
        if not self.started:
            self.stepper.start(x)
            self.started = True
        return max(float(self.stepper.step(x)[0]), 0.0)


class ConstantForce:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, theta, z):
        return self.value


def _check(net, kind):
    if net.kind != kind:
        raise ValueError(f"expected a {kind} network, got {net.kind}")


def _closed_loop(vel, stp, force_src, theta_1, z, t_max):
    _check(vel, "vel")
    _check(stp, "stp")
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    z = np.asarray(z, dtype=np.float64)
    thetas = [float(theta_1)]
    omegas, probs, forces = [], [], []

    def partial(termination):
        return GeneratedTrajectory(
            np.array(thetas), np.array(omegas), np.array(forces),
            np.array(probs).reshape(-1, 2), termination,
        )

    def sense(theta):
        try:
            f = float(force_src(theta, z))
        except Exception as exc:
            raise GenerationError(f"force source failed: {exc}", partial("error")) from exc
        if not np.isfinite(f) or f < 0:
            raise GenerationError(f"force source returned {f}", partial("error"))
        return f

    forces.append(sense(thetas[0]))
    vel_run, stp_run = Stepper(vel), Stepper(stp)
    first = np.concatenate([[thetas[0], forces[0]], z])
    vel_run.start(first)
    stp_run.start(first)

    termination = HIT_MAX
    for _ in range(t_max):
        frame = np.concatenate([[thetas[-1], forces[-1]], z])
        omega = float(vel_run.step(frame)[0])
        theta_next = thetas[-1] + omega
        p = stp_run.step(frame)
        omegas.append(omega)
        thetas.append(theta_next)
        probs.append(p)
        f_next = sense(theta_next)
        if np.argmax(p) == 1:
            # the force for the final angle is never consumed
            termination = STOPPED
            break
        forces.append(f_next)
    return partial(termination)


def generate_live(vel, stp, force_src, theta_1, z, t_max):
    """Generate with forces from ``force_src(theta, z)``, at most ``t_max``
    velocity steps."""
    return _closed_loop(vel, stp, force_src, theta_1, z, t_max)


def generate_simulated(frc, vel, stp, theta_1, z, t_max):
    """Generate with forces estimated by ``frc``, at most ``t_max`` velocity
    steps. Pass ``T_max - 1`` to emit at most ``T_max`` angles."""
    return _closed_loop(vel, stp, NetworkForce(frc), theta_1, z, t_max)


def write_trajectory(traj, path):
    """CSV with one row per angle; ``omega`` and ``p_stop`` are blank on the
    final row, ``force_lbf`` too when the stop fired."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# termination={traj.termination} steps={traj.steps}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "theta_deg", "omega", "force_lbf", "p_stop"])
        for k, theta in enumerate(traj.theta):
            row = [k + 1, "%.17g" % theta]
            row.append("%.17g" % traj.omega[k] if k < traj.steps else "")
            row.append("%.17g" % traj.force[k] if k < traj.force.size else "")
            row.append("%.17g" % traj.p_stop[k, 1] if k < traj.steps else "")
            w.writerow(row)


def read_trajectory(path):
    """Inverse of :func:`write_trajectory` (``p_stop`` keeps only the stop
    probability column)."""
    with open(path, newline="") as fh:
        summary = fh.readline().lstrip("# ").split()
        info = dict(item.split("=", 1) for item in summary)
        rows = list(csv.DictReader(fh))
    theta = np.array([float(r["theta_deg"]) for r in rows])
    omega = np.array([float(r["omega"]) for r in rows if r["omega"]])
    force = np.array([float(r["force_lbf"]) for r in rows if r["force_lbf"]])
    p1 = np.array([float(r["p_stop"]) for r in rows if r["p_stop"]])
    p_stop = np.column_stack([1.0 - p1, p1]) if p1.size else np.zeros((0, 2))
    return GeneratedTrajectory(theta, omega, force, p_stop, info["termination"])
