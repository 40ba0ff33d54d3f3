#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Line dependency kernels

    district kernel   S1[i, j] = exp(-|phi_i - phi_j|^2 - 1[i != j])
    network kernel    S2[i, j] = exp(-rate * d_ij / distance_unit)
    combination       S(w) = w S1 + (1 - w) S2

and the simultaneous diagonalization Q, Lambda with Q^T S1 Q = I and Q^T S2 Q = diag(Lambda), which makes
Q^T S(w) Q = w I + (1 - w) diag(Lambda) diagonal for every w.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.spatial.distance import cdist

from bayesian_outage_rates.exceptions import KernelError, SingularKernelError
from bayesian_outage_rates.features import DistrictFeatures
from bayesian_outage_rates.network import DistanceMatrix
from bayesian_outage_rates.persistence import load_arrays, save_arrays, write_sidecar

logger = logging.getLogger(__name__)

NETWORK_RATE = 2.0
DISTANCE_UNIT_MILES = 1.0
JITTER_START = 1e-10
JITTER_MAX = 1e-6
PSD_TOLERANCE = 1e-8


def psd_floor(n: int) -> float:
    """Smallest eigenvalue accepted as numerically positive semidefinite."""
    return -PSD_TOLERANCE * max(n, 1)


def off_diagonal_mass(kernel: np.ndarray) -> float:
    """Mean off-diagonal entry; near zero means the kernel is effectively the identity."""
    n = kernel.shape[0]
    if n < 2:
        return 0.0
    return float((kernel.sum() - np.trace(kernel)) / (n * (n - 1)))


@dataclass
class KernelSet:
    line_ids: Tuple[str, ...]
    sigma1: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        self.line_ids = tuple(self.line_ids)
        self.sigma1 = np.asarray(self.sigma1, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)

    @property
    def n(self) -> int:
        return len(self.line_ids)

    def validate(self) -> None:
        """
        Check symmetry, unit diagonal, entries in [0, 1] and that S1 is numerically PSD.

        :raises KernelError: Any check fails.
        """
        n = self.n
        for name, kernel in (("sigma1", self.sigma1), ("sigma2", self.sigma2)):
            if kernel.shape != (n, n):
                raise KernelError(f"{name} must be {n}x{n}, got {kernel.shape}")
            if not np.array_equal(kernel, kernel.T):
                raise KernelError(f"{name} is not symmetric")
            if not np.all(np.diag(kernel) == 1.0):
                raise KernelError(f"{name} must have a unit diagonal")
            if np.any(kernel < 0) or np.any(kernel > 1):
                raise KernelError(f"{name} has entries outside [0, 1]")
        smallest = float(linalg.eigvalsh(self.sigma1)[0]) if n else 0.0
        if smallest < psd_floor(n):
            raise KernelError(f"sigma1 is not positive semidefinite (smallest eigenvalue {smallest:.3g})")

    def combine(self, w: float) -> np.ndarray:
        return combine(self, w)

    def subset(self, rows: Sequence[int]) -> "KernelSet":
        rows = np.asarray(rows, dtype=int)
        return KernelSet(
            line_ids=tuple(self.line_ids[k] for k in rows),
            sigma1=self.sigma1[np.ix_(rows, rows)],
            sigma2=self.sigma2[np.ix_(rows, rows)],
        )

    def summary(self) -> dict:
        return dict(
            n=self.n,
            sigma1_off_diagonal_mass=off_diagonal_mass(self.sigma1),
            sigma2_off_diagonal_mass=off_diagonal_mass(self.sigma2),
        )

    def save(self, path: Union[str, Path], **metadata) -> Path:
        path = save_arrays(path, dict(line_ids=np.array(self.line_ids, dtype=str), sigma1=self.sigma1, sigma2=self.sigma2))
        write_sidecar(path, kind="kernels", **self.summary(), **metadata)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "KernelSet":
        data = load_arrays(path)
        return cls(line_ids=tuple(str(v) for v in data["line_ids"]), sigma1=data["sigma1"], sigma2=data["sigma2"])

    def to_csv(self, directory: Union[str, Path]) -> None:
        directory = Path(directory)
        for name, kernel in (("sigma1", self.sigma1), ("sigma2", self.sigma2)):
            frame = pd.DataFrame(kernel, index=list(self.line_ids), columns=list(self.line_ids))
            frame.index.name = "line_id"
            frame.to_csv(directory / f"{name}.csv", float_format="%.17g")


@dataclass
class SimDiag:
    """
    Simultaneous diagonalization of a kernel pair.

    Attributes:
        q (np.ndarray): Q with Q^T S1 Q = I and Q^T S2 Q = diag(lam).
        lam (np.ndarray): nonnegative eigenvalues, ascending.
        q_inv (np.ndarray): Q^{-1} = U^T C^T, so beta = Q^{-T} u is `q_inv.T @ u`.
        log_det_q (float): ln|det Q| = -ln det(S1) / 2.
    """

    q: np.ndarray
    lam: np.ndarray
    q_inv: np.ndarray
    log_det_q: float
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def residuals(self, sigma1: np.ndarray, sigma2: np.ndarray) -> Tuple[float, float]:
        """Max-abs residuals of Q^T S1 Q - I and Q^T S2 Q - diag(lam)."""
        r1 = np.max(np.abs(self.q.T @ sigma1 @ self.q - np.eye(self.n)), initial=0.0)
        r2 = np.max(np.abs(self.q.T @ sigma2 @ self.q - np.diag(self.lam)), initial=0.0)
        return float(r1), float(r2)

    def save(self, path: Union[str, Path]) -> Path:
        return save_arrays(
            path,
            dict(q=self.q, lam=self.lam, q_inv=self.q_inv, log_det_q=np.array(self.log_det_q), jitter=np.array(self.jitter)),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SimDiag":
        data = load_arrays(path)
        return cls(
            q=data["q"],
            lam=data["lam"],
            q_inv=data["q_inv"],
            log_det_q=float(data["log_det_q"]),
            jitter=float(data["jitter"]),
        )


def district_kernel(features: DistrictFeatures) -> np.ndarray:
    phi = features.matrix.astype(float)
    n = phi.shape[0]
    squared = cdist(phi, phi, "sqeuclidean")
    kernel = np.exp(-squared - (1.0 - np.eye(n)))
    np.fill_diagonal(kernel, 1.0)
    return kernel


def network_kernel(
    distances: Union[DistanceMatrix, np.ndarray],
    rate: float = NETWORK_RATE,
    distance_unit: float = DISTANCE_UNIT_MILES,
) -> np.ndarray:
    """
    Exponential kernel of midpoint network distance; infinite distances give 0.

    :raises KernelError: Negative distances or nonpositive rate/unit.
    """
    d = distances.values if isinstance(distances, DistanceMatrix) else np.asarray(distances, dtype=float)
    if not (rate > 0 and distance_unit > 0):
        raise KernelError(f"Kernel rate and distance unit must be positive, got {rate}, {distance_unit}")
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise KernelError("Network distances must be nonnegative")
    kernel = np.exp(-rate * d / distance_unit)
    np.fill_diagonal(kernel, 1.0)
    return kernel


def kernel_set(
    features: DistrictFeatures,
    distances: DistanceMatrix,
    rate: float = NETWORK_RATE,
    distance_unit: float = DISTANCE_UNIT_MILES,
) -> KernelSet:
    if tuple(features.line_ids) != tuple(distances.line_ids):
        raise KernelError("District features and distances must list the same lines in the same order")
    kernels = KernelSet(
        line_ids=features.line_ids,
        sigma1=district_kernel(features),
        sigma2=network_kernel(distances, rate=rate, distance_unit=distance_unit),
    )
    kernels.validate()
    mass = off_diagonal_mass(kernels.sigma2)
    if mass < 1e-6:
        logger.warning(
            f"Network kernel is close to the identity (mean off-diagonal {mass:.3g}); "
            "consider a larger distance unit",
            extra={"sigma2_off_diagonal_mass": mass},
        )
    return kernels


def combine(kernels: KernelSet, w: float) -> np.ndarray:
    """S(w) = w S1 + (1 - w) S2, for 0 < w < 1."""
    if not 0 < w < 1:
        raise KernelError(f"Kernel weight must lie strictly between 0 and 1, got {w}")
    combined = w * kernels.sigma1 + (1 - w) * kernels.sigma2
    np.fill_diagonal(combined, 1.0)
    return combined


def _cholesky_with_jitter(sigma1: np.ndarray, jitter_start: float, jitter_max: float):
    n = sigma1.shape[0]
    jitter = 0.0
    while True:
        try:
            return linalg.cholesky(sigma1 + jitter * np.eye(n), lower=True), jitter
        except linalg.LinAlgError:
            jitter = jitter_start if jitter == 0.0 else jitter * 10
            if jitter > jitter_max * (1 + 1e-12):
                raise SingularKernelError(
                    f"Cholesky factorization of the district kernel failed with jitter up to {jitter_max:g}"
                ) from None
            logger.debug(f"Cholesky failed, retrying with jitter {jitter:g}")


def _fix_signs(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip eigenvector columns so the first nonzero component is positive."""
    vectors = vectors.copy()
    for k in range(vectors.shape[1]):
        nonzero = np.flatnonzero(np.abs(vectors[:, k]) > tol)
        if nonzero.size and vectors[nonzero[0], k] < 0:
            vectors[:, k] *= -1
    return vectors


def simdiag(
    sigma1: np.ndarray,
    sigma2: np.ndarray,
    jitter_start: float = JITTER_START,
    jitter_max: float = JITTER_MAX,
) -> SimDiag:
    """
    Simultaneously diagonalize S1 (positive definite) and S2.

    S1 = C C^T, M = C^{-1} S2 C^{-T} = U diag(lam) U^T, Q = C^{-T} U.

    :raises SingularKernelError: S1 is not positive definite even with the largest jitter.
    :raises KernelError: S2 has an eigenvalue relative to S1 that is clearly negative.
    """
    sigma1 = np.asarray(sigma1, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    n = sigma1.shape[0]
    chol, jitter = _cholesky_with_jitter(sigma1, jitter_start, jitter_max)
    if jitter:
        logger.warning(f"District kernel needed jitter {jitter:g} to factorize", extra={"jitter": jitter})

    c_inv_s2 = linalg.solve_triangular(chol, sigma2, lower=True)
    m = linalg.solve_triangular(chol, c_inv_s2.T, lower=True)
    m = (m + m.T) / 2
    lam, u = linalg.eigh(m)
    u = _fix_signs(u)

    if n and lam[0] < psd_floor(n):
        raise KernelError(
            f"Network kernel is not positive semidefinite (generalized eigenvalue {lam[0]:.3g}); "
            "use a smaller kernel rate or distance unit"
        )
    lam = np.clip(lam, 0.0, None)

    q = linalg.solve_triangular(chol, u, lower=True, trans="T")
    q_inv = u.T @ chol.T
    log_det_q = -float(np.sum(np.log(np.diag(chol))))
    return SimDiag(q=q, lam=lam, q_inv=q_inv, log_det_q=log_det_q, jitter=jitter)
