"""Central tolerance/budget configuration.

Every numerical threshold used by the toolkit lives in one frozen record so
tests and callers can see (and override) the complete set in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # numkernel
    eig_max_dim: int = 12               # largest matrix accepted by eigenvalues()
    eig_newton_steps: int = 2           # polish steps for the closed-form cubic
    mat_exp_scaled_norm: float = 0.5    # scale-and-square until ||A/2^s|| <= this
    mat_exp_pade_order: int = 10        # [m/m] rational approximant order

    # ode
    integrator_tol: float = 1e-10       # default local error tolerance
    integrator_min_tol: float = 1e-14
    integrator_max_tol: float = 1e-3
    integrator_max_steps: int = 1_000_000
    fd_step_scale: float = 4.6416e-06   # cbrt(eps), for callback finite differences

    # obsmap
    gamma_safety: float = 1.5           # default multiplier on sampled ||D2 phi||
    gamma_fd_step: float = 1e-4         # directional second-difference step scale
    verify_margin_rel: float = 1e-6     # slack on sqrt(beta)/2 in verify_lower_bound
    zeta_budget: int = 200_000          # max lattice cells per scan

    # linearcase
    k_scan: int = 16                    # aliasing search bound |k| <= k_scan
    krylov_rank_rel: float = 1e-10      # Krylov dependence threshold, rel. sigma1
    k_max: int = 2                      # default log-branch enumeration bound
    branch_budget: int = 10_000         # max enumerated branches
    aliasing_im_tol: float = 1e-7       # |Im(dl)*h/2pi - round(.)| threshold
    aliasing_re_tol: float = 1e-9       # |Re(dl)| threshold, times eigenvalue scale
    branch_exp_tol: float = 1e-8        # ||exp(h b) - exp(h a0)||_inf acceptance
    branch_distinct_tol: float = 1e-6   # branches closer than this are duplicates
    imag_residue_tol: float = 1e-9      # allowed Im part when reassembling branches
    divdiff_min_gap: float = 1e-8         # minimum eigenvalue separation

    # estimate
    gn_max_iter: int = 50
    gn_step_tol: float = 1e-12
    gn_grad_tol: float = 1e-9
    gn_damping: float = 1e-3
    gn_damping_down: float = 0.5        # on accepted step
    gn_damping_up: float = 4.0          # on rejected step

    def with_overrides(self, **kwargs) -> "Tolerances":
        return replace(self, **kwargs)


DEFAULTS = Tolerances()
