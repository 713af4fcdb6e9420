"""Reference systems and states shared by the presets, demos and tests."""
from __future__ import annotations

import numpy as np

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)

# single qubit with a coherence
QUBIT_A_RHO = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
QUBIT_A_H = np.diag([0.0, 1.0]).astype(complex)

# diagonal qutrit, energies 0, 1, 2
QUTRIT_D_RHO = np.diag([0.5, 0.1, 0.4]).astype(complex)
QUTRIT_D_H = np.diag([0.0, 1.0, 2.0]).astype(complex)

# rank-2 qutrit with a coherence inside the span of the two lowest levels
QUTRIT_RANK2_RHO = np.array([[0.6, 0.3 + 0.1j, 0.0], [0.3 - 0.1j, 0.4, 0.0], [0.0, 0.0, 0.0]], dtype=complex)


def bell_phi_plus() -> np.ndarray:
    v = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)
    return np.outer(v, v).astype(complex)


def two_qubit_werner(p: float = 0.6) -> np.ndarray:
    """p |Phi+><Phi+| + (1 - p) I/4. Both marginals are I/2."""
    return p * bell_phi_plus() + (1.0 - p) * np.eye(4, dtype=complex) / 4.0


TWO_QUBIT_RHO = two_qubit_werner(0.6)


def two_qubit_correlated(theta: float = 0.4, p: float = 0.6) -> np.ndarray:
    """Correlated two-qubit state with non-maximally-mixed, non-commuting marginals.

    p |psi><psi| + (1 - p) rho_a x rho_b with psi = cos(theta)|00> + sin(theta)|11>.
    Unlike the Werner-type state its local perceptions of ln(rho) are not
    multiples of the identity, so both composite dissipators act on it.
    """
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = np.cos(theta), np.sin(theta)
    ra = np.diag([0.7, 0.3]).astype(complex)
    rb = np.array([[0.6, 0.1], [0.1, 0.4]], dtype=complex)
    return p * np.outer(psi, psi.conj()) + (1.0 - p) * np.kron(ra, rb)


TWO_QUBIT_CORRELATED_RHO = two_qubit_correlated()


def two_qubit_local_hamiltonians():
    return (SIGMA_Z.copy(), SIGMA_Z.copy())
