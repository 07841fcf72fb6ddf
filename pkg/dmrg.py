"""两格点 DMRG 基态搜索。

每次 sweep 为一次左→右加一次右→左。前若干阶段在截断前向约化密度矩阵
加入扰动项 α Σ_x P_x P_x†（P 为有效哈密顿量半边作用在 θ 上的结果），
帮助跳出规范串哈密顿量的局部守恒结构；noise = 0 时退化为普通 SVD 截断。

ε_trunc 定义为一次 sweep 中各键被丢弃权重的最大值。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from errors import ConvergenceError
from models import DmrgParams, SweepStage
from mpo import MPO, contract_left, contract_right, mpo_product
from mps import MPS

logger = logging.getLogger(__name__)

# 有效哈密顿量维数不超过该值时直接稠密对角化
DENSE_LOCAL_DIM = 400


@dataclass
class DmrgResult:
    mps: MPS
    energy: float
    energies: list[float] = field(default_factory=list)
    truncation_errors: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def eps_trunc(self) -> float:
        return self.truncation_errors[-1] if self.truncation_errors else 0.0


def _apply_heff(L: np.ndarray, W1: np.ndarray, W2: np.ndarray, R: np.ndarray, theta: np.ndarray) -> np.ndarray:
    T = np.tensordot(L, theta, axes=(2, 0))  # (a, w, s', t', c')
    T = np.tensordot(T, W1, axes=([1, 2], [0, 3]))  # (a, t', c', x, s)
    T = np.tensordot(T, W2, axes=([3, 1], [0, 3]))  # (a, c', s, y, t)
    T = np.tensordot(T, R, axes=([1, 3], [2, 1]))  # (a, s, t, c)
    return T


def _local_ground(
    L: np.ndarray, W1: np.ndarray, W2: np.ndarray, R: np.ndarray, theta: np.ndarray, tol: float
) -> tuple[float, np.ndarray]:
    shape = theta.shape
    dim = theta.size
    if dim <= DENSE_LOCAL_DIM:
        H = np.einsum("awA,wxsS,xytT,cyC->astcASTC", L, W1, W2, R).reshape(dim, dim)
        w, v = np.linalg.eigh((H + H.conj().T) / 2)
        return float(w[0]), v[:, 0].reshape(shape)

    def matvec(x: np.ndarray) -> np.ndarray:
        return _apply_heff(L, W1, W2, R, x.reshape(shape)).reshape(-1)

    op = LinearOperator((dim, dim), matvec=matvec, dtype=complex)
    v0 = theta.reshape(-1)
    if np.linalg.norm(v0) < 1e-14:
        v0 = np.ones(dim, dtype=complex)
    try:
        w, v = eigsh(op, k=1, which="SA", v0=v0, tol=tol)
    except ArpackNoConvergence as e:
        if e.eigenvalues is None or not len(e.eigenvalues):
            raise ConvergenceError("局部本征问题未收敛") from e
        logger.warning("局部本征问题未完全收敛，使用当前最优近似")
        w, v = e.eigenvalues, e.eigenvectors
    j = int(np.argmin(w))
    return float(w[j]), v[:, j].reshape(shape)


def _truncation_count(weights: np.ndarray, m: int, cutoff: float) -> int:
    """降序权重下保留的个数：不超过 m，丢弃相对权重小于 cutoff 的尾部。"""
    total = weights.sum()
    keep = int(np.sum(weights > cutoff * total)) if total > 0 else 1
    return max(1, min(m, keep))


def _split(
    theta: np.ndarray,
    stage: SweepStage,
    cutoff: float,
    moving_right: bool,
    env: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
) -> tuple[np.ndarray, np.ndarray, float]:
    """把两格点张量拆回两个格点，返回 (A, B, 丢弃权重)。

    右移时 A 左正则、B 承载中心；左移时 B 右正则、A 承载中心。
    """
    Dl, d1, d2, Dr = theta.shape
    X = theta.reshape(Dl * d1, d2 * Dr)
    norm2 = np.vdot(X, X).real

    if stage.noise == 0:
        U, s, Vh = np.linalg.svd(X, full_matrices=False)
        k = _truncation_count(s**2, stage.m, cutoff)
        discarded = float(np.sum(s[k:] ** 2) / np.sum(s**2))
        s = s[:k] / np.linalg.norm(s[:k])
        if moving_right:
            A = U[:, :k].reshape(Dl, d1, k)
            B = (s[:, None] * Vh[:k]).reshape(k, d2, Dr)
        else:
            A = (U[:, :k] * s[None, :]).reshape(Dl, d1, k)
            B = Vh[:k].reshape(k, d2, Dr)
        return A, B, discarded

    L, W1, W2, R = env
    if moving_right:
        P = np.tensordot(L, theta, axes=(2, 0))  # (a, w, s', t, c)
        P = np.tensordot(P, W1, axes=([1, 2], [0, 3]))  # (a, t, c, x, s)
        P = P.transpose(0, 4, 3, 1, 2).reshape(Dl * d1, -1)
        rho = X @ X.conj().T + stage.noise * (P @ P.conj().T)
        w, V = np.linalg.eigh(rho)
        w, V = w[::-1], V[:, ::-1]
        k = _truncation_count(np.clip(w, 0, None), stage.m, cutoff)
        U = V[:, :k]
        C = U.conj().T @ X
        kept = np.vdot(C, C).real
        A = U.reshape(Dl, d1, k)
        B = (C / np.sqrt(kept)).reshape(k, d2, Dr)
    else:
        P = np.tensordot(theta, R, axes=(3, 2))  # (a, s, t', c, y)
        P = np.tensordot(P, W2, axes=([2, 4], [3, 1]))  # (a, s, c, x, t)
        P = P.transpose(0, 1, 3, 4, 2).reshape(-1, d2 * Dr)
        rho = X.conj().T @ X + stage.noise * (P.conj().T @ P)
        w, V = np.linalg.eigh(rho)
        w, V = w[::-1], V[:, ::-1]
        k = _truncation_count(np.clip(w, 0, None), stage.m, cutoff)
        Vk = V[:, :k]
        C = X @ Vk
        kept = np.vdot(C, C).real
        A = (C / np.sqrt(kept)).reshape(Dl, d1, k)
        B = Vk.conj().T.reshape(k, d2, Dr)
    discarded = float(max(0.0, 1.0 - kept / norm2))
    return A, B, discarded


def dmrg_ground(mpo: MPO, params: DmrgParams, seed: int = 0, initial: MPS | None = None) -> DmrgResult:
    """两格点 DMRG。进入无噪声的最后阶段后，相邻 sweep 的能量差或同一 sweep
    前后两个半程的能量差小于 energy_tol 即收敛。

    未收敛时抛出 ConvergenceError，history 为每次 sweep 的能量。
    """
    n, d = len(mpo), mpo.d
    if n == 1:
        w, v = np.linalg.eigh(mpo.tensors[0][0, 0])
        psi = MPS([v[:, 0].reshape(1, d, 1)], center=0)
        return DmrgResult(psi, float(w[0]), [float(w[0])], [0.0], True)

    rng = np.random.default_rng(seed)
    if initial is not None:
        psi = initial.copy()
        psi.canonicalize(0)
        psi.normalize()
    else:
        psi = MPS.random(n, d, params.stage(0).m, rng)

    W = mpo.tensors
    Lenv: list[np.ndarray | None] = [None] * n
    Renv: list[np.ndarray | None] = [None] * n
    Lenv[0] = np.ones((1, 1, 1), dtype=complex)
    Renv[n - 1] = np.ones((1, 1, 1), dtype=complex)
    for i in range(n - 1, 0, -1):
        Renv[i - 1] = contract_right(Renv[i], psi.tensors[i], W[i])

    energies: list[float] = []
    eps_history: list[float] = []
    energy = np.inf
    converged = False
    for sweep in range(params.max_sweeps):
        stage = params.stage(sweep)
        eps = 0.0
        for i in range(n - 1):
            theta = np.tensordot(psi.tensors[i], psi.tensors[i + 1], axes=(2, 0))
            energy, theta = _local_ground(Lenv[i], W[i], W[i + 1], Renv[i + 1], theta, stage.tol)
            A, B, disc = _split(theta, stage, params.svd_min, True, (Lenv[i], W[i], W[i + 1], Renv[i + 1]))
            psi.tensors[i], psi.tensors[i + 1] = A, B
            eps = max(eps, disc)
            Lenv[i + 1] = contract_left(Lenv[i], A, W[i])
        half_energy = energy
        for i in range(n - 2, -1, -1):
            theta = np.tensordot(psi.tensors[i], psi.tensors[i + 1], axes=(2, 0))
            energy, theta = _local_ground(Lenv[i], W[i], W[i + 1], Renv[i + 1], theta, stage.tol)
            A, B, disc = _split(theta, stage, params.svd_min, False, (Lenv[i], W[i], W[i + 1], Renv[i + 1]))
            psi.tensors[i], psi.tensors[i + 1] = A, B
            eps = max(eps, disc)
            Renv[i] = contract_right(Renv[i + 1], B, W[i + 1])
        psi.center = 0
        energies.append(energy)
        eps_history.append(eps)
        logger.info(
            "sweep %d: E = %.12f, 最大键维 %d, ε_trunc = %.3e",
            sweep, energy, max(psi.bond_dims, default=1), eps,
        )
        last_stage = sweep >= params.schedule_length() - 1 and stage.noise == 0
        settled = len(energies) >= 2 and abs(energies[-1] - energies[-2]) < params.energy_tol
        within = abs(energy - half_energy) < params.energy_tol
        if last_stage and (settled or within):
            converged = True
            break

    psi.normalize()
    psi.truncation_errors = eps_history
    if not converged:
        raise ConvergenceError(
            f"DMRG 在 {params.max_sweeps} 次 sweep 内未收敛", history=energies
        )
    return DmrgResult(psi, float(energy), energies, eps_history, True)


def energy_variance(mpo: MPO, psi: MPS) -> float:
    """⟨H²⟩ - ⟨H⟩²，通过 MPO 自乘计算，只适用于小系统。"""
    e = mpo.expectation(psi).real
    e2 = mpo_product(mpo, mpo).expectation(psi).real
    return float(e2 - e * e)
