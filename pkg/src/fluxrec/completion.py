"""Regularized energy-gap optimality system on the inner boundary.

Given Cauchy data (f, g) on the outer loop, the unknown Dirichlet value u on
the inner loop is found by minimizing the energy of the gradient gap between
the Dirichlet-data solution and the Neumann-data solution, plus a Tikhonov
term.  The optimality condition collapses to a small dense linear system

    [(1 + eps) S_D - S_N] u = l

on the inner-boundary degrees of freedom, where S_D and S_N are the two
Dirichlet-to-Neumann (interface) matrices.  S_D and S_N depend on geometry
only and are assembled once; only l changes with the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigvalsh

from . import fem
from .fem import FluxField, StiffnessMatrix, weighted_normal_derivative
from .mesh import INNER, Mesh


class KVAssemblyError(RuntimeError):
    """Interface-system invariant violated: indicates an assembly or sign bug."""


class NearSingularError(RuntimeError):
    """Unregularized interface system could not be factored."""


@dataclass(frozen=True)
class CauchyData:
    """Paired Dirichlet trace f and weighted Neumann trace g on the outer loop."""

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(np.asarray(self.f, dtype=np.float64))
        g = np.ascontiguousarray(np.asarray(self.g, dtype=np.float64))
        if f.shape != g.shape or f.ndim != 1:
            raise ValueError("f and g must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError("non-finite Cauchy data")
        f.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    def check(self, mesh: Mesh) -> None:
        n = len(mesh.boundary.outer_nodes)
        if len(self.f) != n:
            raise ValueError(f"Cauchy data length {len(self.f)} != {n} outer nodes")


@dataclass
class CompletionResult:
    """Optimal inner-boundary value and the reconstructed flux.

    The reconstructed field is the Neumann solution at the optimum (the
    Dirichlet solution is far more sensitive to noise on f, so it is never
    used as the output field).
    """

    u_opt: np.ndarray
    psi_opt: FluxField
    J: float
    R_D: float
    J_eps: float
    epsilon: float
    residual_norm: float
    condition_estimate: float | None = None


@dataclass
class KVSystem:
    """Assembled interface matrices, load vector and factorization caches."""

    s_d: np.ndarray
    s_n: np.ndarray
    load: np.ndarray
    mesh: Mesh
    stiffness: StiffnessMatrix
    data: CauchyData
    tilde_d: FluxField
    tilde_n: FluxField
    epsilon: float | None = None
    _factors: dict = field(default_factory=dict, repr=False)
    _constant: float | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.s_d.shape[0]

    def system_matrix(self, epsilon: float) -> np.ndarray:
        """(1 + eps) S_D - S_N."""
        return (1.0 + epsilon) * self.s_d - self.s_n

    def constant_term(self) -> float:
        """Half the energy of the data-only gap field; J(0) equals this."""
        if self._constant is None:
            self._constant = 0.5 * fem.energy_norm_sq(
                self.tilde_d, self.tilde_n, self.stiffness)
        return self._constant

    def load_for(self, data: CauchyData) -> np.ndarray:
        """Load vector for other Cauchy data (matrices are reused as-is)."""
        if data is self.data:
            return self.load
        _, _, load = _data_terms(self.mesh, self.stiffness, data)
        return load


def _harmonic_columns(reduced, n: int, boundary_cols: np.ndarray) -> np.ndarray:
    """Batched solves: one column per inner-boundary basis function."""
    x = np.zeros((n, boundary_cols.shape[1]))
    x[reduced.constrained] = boundary_cols
    rhs = -np.asarray(reduced.coupling @ boundary_cols)
    x[reduced.free] = reduced.factor.solve(rhs)
    return x


def _objective_terms(system: KVSystem, data: CauchyData, u: np.ndarray,
                     epsilon: float, psi_n: FluxField | None = None):
    """J, R_D, J_eps at a control, reusing psi_n if given.

    J comes from the direct volume integral of the two solutions' gradient
    gap.  R_D = s_D(u, u) / 2 uses the interface matrix, which equals the
    lifted field's energy exactly (the lift pairs against itself).
    """
    A = system.stiffness
    psi_d = fem.solve_dirichlet(A, data.f, u)
    if psi_n is None:
        psi_n = fem.solve_neumann(A, data.g, u)
    J = 0.5 * fem.energy_norm_sq(psi_d, psi_n, A)
    R_D = 0.5 * float(u @ (system.s_d @ u))
    return J, R_D, J + epsilon * R_D


def _data_terms(mesh: Mesh, A: StiffnessMatrix, data: CauchyData):
    """Lifted data fields and the resulting interface load vector."""
    data.check(mesh)
    tilde_d = fem.solve_dirichlet(A, data.f, 0.0)
    tilde_n = fem.solve_neumann(A, data.g, 0.0)
    inner = mesh.boundary.inner_nodes
    load = -(A.matrix @ (tilde_d.values - tilde_n.values))[inner]
    return tilde_d, tilde_n, load


def assemble_kv(mesh: Mesh, A: StiffnessMatrix, data: CauchyData,
                reuse: KVSystem | None = None) -> KVSystem:
    """Build the interface system for the given mesh and Cauchy data.

    Each inner-boundary basis function is lifted by a Dirichlet solve (zero
    on the outer loop) and a Neumann solve (zero weighted flux there); the
    matrices pair the lifted fields against the trivial extension, which
    collapses to rows of A times the lifted columns.  Invariants (symmetry,
    S_D positive definite, S_D - S_N positive semidefinite) are verified
    here and violations raise KVAssemblyError.

    Pass a previously assembled system as `reuse` to skip the geometry part
    and recompute only the data-dependent load.
    """
    b = mesh.boundary
    ni = len(b.inner_nodes)
    if ni == 0:
        raise ValueError("completion requires an inner boundary")

    if reuse is not None:
        if reuse.mesh is not mesh or reuse.stiffness is not A:
            raise ValueError("reuse system was assembled on a different mesh")
        s_d, s_n = reuse.s_d, reuse.s_n
    else:
        n = mesh.node_count
        no = len(b.outer_nodes)
        basis = np.eye(ni)
        cols_d = _harmonic_columns(
            A._dirichlet, n, np.vstack([np.zeros((no, ni)), basis]))
        cols_n = _harmonic_columns(A._neumann, n, basis)
        s_d = (A.matrix @ cols_d)[b.inner_nodes, :]
        s_n = (A.matrix @ cols_n)[b.inner_nodes, :]

        for name, s in (("S_D", s_d), ("S_N", s_n)):
            scale = max(np.abs(s).max(), 1e-300)
            asym = np.abs(s - s.T).max()
            if asym > 1e-12 * scale:
                raise KVAssemblyError(
                    f"{name} asymmetry {asym:.3e} exceeds 1e-12 relative")
        s_d = 0.5 * (s_d + s_d.T)
        s_n = 0.5 * (s_n + s_n.T)
        norm_d = np.linalg.norm(s_d, 2)
        if eigvalsh(s_d).min() <= 0.0:
            raise KVAssemblyError("S_D is not positive definite")
        gap_min = eigvalsh(s_d - s_n).min()
        if gap_min < -1e-10 * norm_d:
            raise KVAssemblyError(
                f"S_D - S_N has eigenvalue {gap_min:.3e} below -1e-10 ||S_D||")

    tilde_d, tilde_n, load = _data_terms(mesh, A, data)
    return KVSystem(s_d, s_n, load, mesh, A, data, tilde_d, tilde_n)


def evaluate(system: KVSystem, data: CauchyData, u,
             epsilon: float | None = None):
    """Misfit J, regularizer R_D and total J_eps at a given control.

    J is computed by the direct volume integral (two solves plus the energy
    norm), not through the quadratic form, so it can cross-check the
    identity J(v) = (s_D(v,v) - s_N(v,v))/2 - l(v) + c.
    """
    u = fem._boundary_values(u, system.size, "u")
    if epsilon is None:
        epsilon = system.epsilon if system.epsilon is not None else 0.0
    return _objective_terms(system, data, u, epsilon)


def quadratic_misfit(system: KVSystem, u, data: CauchyData | None = None) -> float:
    """J through the interface quadratic form: v'(S_D - S_N)v/2 - l'v + c."""
    u = fem._boundary_values(u, system.size, "u")
    load = system.load if data is None else system.load_for(data)
    return float(0.5 * u @ ((system.s_d - system.s_n) @ u) - load @ u
                 + system.constant_term())


def solve_completion(system: KVSystem, epsilon: float,
                     data: CauchyData | None = None) -> CompletionResult:
    """Solve the regularized interface system and reconstruct the flux.

    epsilon > 0 gives a symmetric positive definite system solved by a
    cached Cholesky factorization with iterative refinement.  epsilon = 0 is
    attempted anyway; if the factorization fails the system is reported as
    near singular (the unregularized operator is expected to be almost
    singular).
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if data is None:
        data = system.data
        load = system.load
    else:
        load = system.load_for(data)

    S = system.system_matrix(epsilon)
    condition = None
    key = float(epsilon)
    try:
        factor = system._factors.get(key)
        if factor is None:
            factor = cho_factor(S)
            system._factors[key] = factor
        solve = lambda rhs: cho_solve(factor, rhs)
    except np.linalg.LinAlgError as exc:
        if epsilon > 0.0:
            raise
        eigvals = np.abs(np.linalg.eigvalsh(S))
        condition = float(eigvals.max() / max(eigvals.min(), 1e-300))
        raise NearSingularError(
            f"unregularized system is numerically singular "
            f"(condition estimate {condition:.3e}): {exc}") from exc
    if epsilon == 0.0:
        condition = float(np.linalg.cond(S))

    u = solve(load)
    for _ in range(2):
        r = load - S @ u
        u = u + solve(r)
    denom = np.linalg.norm(load)
    residual = float(np.linalg.norm(S @ u - load) / denom) if denom > 0 \
        else float(np.linalg.norm(S @ u))

    system.epsilon = float(epsilon)
    psi_opt = fem.solve_neumann(system.stiffness, data.g, u)
    J, R_D, J_eps = _objective_terms(system, data, u, epsilon, psi_n=psi_opt)
    return CompletionResult(u, psi_opt, J, R_D, J_eps, float(epsilon),
                            residual, condition)


def optimality_residual(system: KVSystem, u_opt, data: CauchyData | None = None,
                        epsilon: float | None = None) -> np.ndarray:
    """Inner-boundary flux mismatch at a control; near zero at the optimum.

    Recovers the weighted normal derivatives of the Dirichlet solution, the
    Neumann solution and the regularizing Dirichlet lift by fresh solves, so
    it checks the optimality condition independently of the assembled
    interface matrices.
    """
    if epsilon is None:
        epsilon = system.epsilon
    if epsilon is None:
        raise ValueError("epsilon not set; solve first or pass it explicitly")
    if data is None:
        data = system.data
    A = system.stiffness
    u_opt = fem._boundary_values(u_opt, system.size, "u_opt")
    psi_d = fem.solve_dirichlet(A, data.f, u_opt)
    psi_n = fem.solve_neumann(A, data.g, u_opt)
    psi_d0 = fem.solve_dirichlet(A, 0.0, u_opt)
    return (weighted_normal_derivative(psi_d, A, INNER)
            - weighted_normal_derivative(psi_n, A, INNER)
            + epsilon * weighted_normal_derivative(psi_d0, A, INNER))
