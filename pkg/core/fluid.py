"""
Controlled fluid dynamics with reflection at 1, explicit Euler stepping.

The free path moves by
    d psi_1 = [lambda phi_0(t) - r_1(t) rho_1(t)] dt,   d psi_k = -r_k(t) rho_k(t) dt  (k >= 2),
with r_k = zeta_k - zeta_{k+1} read at the left endpoint of each step, and (zeta, eta) is the
Skorokhod image of psi. The reflection is applied step by step in running-maximum form, which
reproduces solve_sp on the whole free path.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from core.ratefn import ell
from core.skorokhod import GridPath
from utils.errors import MeshMismatchError, TruncationError
from utils.logger import fluid_logger
from utils.schemas import ControlPolicy, InitialOccupancy

TOL_BOUNDARY = 1e-8
DEFAULT_DT_FRACTION = 1e-4
MAX_AUTO_M = 256


@dataclass(frozen=True)
class FluidPath:
    mesh: np.ndarray
    zeta: GridPath
    psi: GridPath
    eta: GridPath
    lam: float
    control: ControlPolicy

    @property
    def M(self) -> int:
        return self.zeta.M

    @property
    def horizon(self) -> float:
        return float(self.mesh[-1])

    @property
    def r(self) -> np.ndarray:
        """r_k(t) = zeta_k(t) - zeta_{k+1}(t), shape (M, N); zeta_{M+1} = 0."""
        z = self.zeta.values
        return z - np.vstack([z[1:], np.zeros((1, z.shape[1]))])

    def shortest_levels(self, tol: float = TOL_BOUNDARY) -> np.ndarray:
        return np.array([shortest_level(self.zeta.values[:, i], tol) for i in range(self.mesh.size)])

    def processes(self):
        return (("zeta", self.zeta), ("psi", self.psi), ("eta", self.eta))

    def to_frame(self) -> pd.DataFrame:
        """time, then zeta_k, psi_k and eta_k for k = 1..M."""
        frames = [path.to_frame(f"{name}_").set_index("time") for name, path in self.processes()]
        return pd.concat(frames, axis=1).reset_index()

    def to_records(self):
        records = {name: path.to_records() for name, path in self.processes()}
        return [
            {"time": row["time"], **{name: records[name][i]["values"] for name in records}}
            for i, row in enumerate(records["zeta"])
        ]

    def mass_balance(self) -> float:
        """sum_k (zeta_k(T) - zeta_k(0)) minus the trapezoid integral of lambda phi_0 - sum_k r_k rho_k."""
        phi0, rho = control_on_mesh(self.control, self.mesh, self.M)
        flow = self.lam * phi0 - np.sum(self.r * rho, axis=0)
        growth = float(np.sum(self.zeta.values[:, -1] - self.zeta.values[:, 0]))
        return growth - float(trapezoid(flow, self.mesh))


def shortest_level(zeta_at_t, tol: float = TOL_BOUNDARY) -> int:
    """Largest k with zeta_k >= 1 - tol (0 when zeta_1 is below the boundary)."""
    level = 0
    for v in np.asarray(zeta_at_t, dtype=float):
        if v < 1.0 - tol:
            break
        level += 1
    return level


def control_on_mesh(control: ControlPolicy, mesh: np.ndarray, M: int):
    """phi_0 at each mesh point (N,) and rho at each mesh point (M, N), right-continuous."""
    idx = np.searchsorted(control.mesh, mesh, side="right") - 1
    idx = np.clip(idx, 0, control.n_segments - 1)
    phi0 = np.asarray(control.phi0, dtype=float)[idx]
    rho = control.rho_matrix(M)[idx].T
    return phi0, rho


def auto_dimension(control: ControlPolicy, x0: InitialOccupancy) -> int:
    return max(x0.support, control.last_active_coordinate()) + 2


def _integrate_fixed(control: ControlPolicy, x0: InitialOccupancy, T: float, dt: float,
                     lam: float, M: int) -> FluidPath:
    steps = int(np.ceil(T / dt - 1e-9))
    mesh = np.linspace(0.0, T, steps + 1)
    phi0, rho = control_on_mesh(control, mesh, M)

    psi = np.zeros((M, steps + 1))
    zeta = np.zeros((M, steps + 1))
    eta = np.zeros((M, steps + 1))
    psi[:, 0] = x0.as_array(M)
    zeta[:, 0] = psi[:, 0]
    # coarse meshes keep a usable guard band
    guard = max(1.0 - 10.0 * dt, 0.5)

    for i in range(steps):
        h = mesh[i + 1] - mesh[i]
        z = zeta[:, i]
        r = z - np.append(z[1:], 0.0)
        drift = -r * rho[:, i]
        drift[0] += lam * phi0[i]
        psi[:, i + 1] = psi[:, i] + drift * h
        carry = 0.0
        for k in range(M):
            u = psi[k, i + 1] + carry
            eta[k, i + 1] = max(eta[k, i], u - 1.0, 0.0)
            zeta[k, i + 1] = u - eta[k, i + 1]
            carry = eta[k, i + 1]
        if zeta[M - 1, i + 1] >= guard:
            raise TruncationError(
                f"coordinate M={M} reached {zeta[M - 1, i + 1]:.6g} at t={mesh[i + 1]:.6g}; increase M"
            )

    return FluidPath(
        mesh=mesh,
        zeta=GridPath(mesh, zeta),
        psi=GridPath(mesh, psi),
        eta=GridPath(mesh, eta),
        lam=lam,
        control=control,
    )


def integrate(control: ControlPolicy, x0: InitialOccupancy, T: float, dt: Optional[float] = None,
              lam: float = 1.0, M: Optional[int] = None) -> FluidPath:
    """
    Euler integration on a uniform mesh of step dt (default 1e-4 T). With M given, reaching the
    boundary at coordinate M is an error; otherwise M starts at the auto choice and grows.
    """
    if dt is None:
        dt = DEFAULT_DT_FRACTION * T
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    if control.horizon < T * (1.0 - 1e-12):
        raise MeshMismatchError(f"control defined up to {control.horizon}, integration horizon is {T}")
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if M is not None:
        return _integrate_fixed(control, x0, T, dt, lam, M)

    M = auto_dimension(control, x0)
    while True:
        try:
            return _integrate_fixed(control, x0, T, dt, lam, M)
        except TruncationError as e:
            if M >= MAX_AUTO_M:
                raise
            fluid_logger.log(f"Warning: {e}; retrying with M={M + 2}")
            M += 2


def cost(control: ControlPolicy, path: FluidPath, lam: Optional[float] = None) -> float:
    """
    Trapezoid rule for int_0^T [lambda l(phi_0) + sum_k r_k l(rho_k)] dt on the path's mesh.
    Coordinates beyond the control's last service entry run at rate 1 and cost nothing.
    """
    lam = path.lam if lam is None else lam
    if control.horizon < path.horizon * (1.0 - 1e-12):
        raise MeshMismatchError(f"control horizon {control.horizon} does not cover path horizon {path.horizon}")
    phi0, rho = control_on_mesh(control, path.mesh, path.M)
    running = lam * ell(phi0) + np.sum(path.r * ell(rho), axis=0)
    return float(trapezoid(running, path.mesh))
