"""精确对角化：稠密全谱、无矩阵 Lanczos 基态与 Gauss 扇区投影。

向量按链格点展开为 (N,)*n 张量，格点 0 为最高位，与 np.kron 的顺序一致。
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from clock import clock_matrices, monomial_exponents
from errors import ConvergenceError, DimensionError, SectorError
from hamiltonian import TermList, build_clock_limit, local_matrices
from models import Couplings, LadderSpec

logger = logging.getLogger(__name__)

MAX_DENSE_DIM = 10_000
MAX_SPARSE_DIM = 5_000_000
# 小于该维数时 ARPACK 不划算，直接稠密对角化
SMALL_DIM = 256


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray  # 升序实数
    ground_vector: np.ndarray | None
    sector_label: str = "full"
    residual: float | None = None

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])


@dataclass
class SectorOperator:
    """限制在 Gauss 扇区上的哈密顿量（τ 本征基下的稀疏矩阵）。"""

    matrix: sp.csr_matrix
    basis: np.ndarray  # 扇区内基矢在完整空间中的下标
    N: int
    chain_length: int
    label: str

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


# ---------- 算符作用 ----------


def apply_terms(terms: TermList, vec: np.ndarray) -> np.ndarray:
    """无矩阵地把项表作用到态矢量上，逐项用 tensordot 作用局域矩阵。"""
    n, d = terms.chain_length, terms.N
    mats = local_matrices(terms, d)
    psi = np.asarray(vec, dtype=complex).reshape((d,) * n)
    out = np.zeros_like(psi)
    for t in terms:
        phi = psi
        for site, name in t.factors:
            phi = np.moveaxis(np.tensordot(mats[name], phi, axes=([1], [site])), 0, site)
        out += t.coeff * phi
    return out.reshape(-1)


def as_linear_operator(terms: TermList) -> LinearOperator:
    dim = terms.dim
    return LinearOperator(
        (dim, dim), matvec=lambda v: apply_terms(terms, v), dtype=complex
    )


def to_sparse(terms: TermList, basis_change: np.ndarray | None = None) -> sp.csr_matrix:
    """按 kron 组装稀疏矩阵。basis_change 给出时局域矩阵先变换为 U† M U。"""
    n, d = terms.chain_length, terms.N
    mats = local_matrices(terms, d)
    if basis_change is not None:
        U = basis_change
        mats = {k: U.conj().T @ m @ U for k, m in mats.items()}
    dim = terms.dim
    H = sp.csr_matrix((dim, dim), dtype=complex)
    for t in terms:
        op = sp.identity(1, dtype=complex, format="csr")
        cursor = 0
        for site, name in t.factors:
            if site > cursor:
                op = sp.kron(op, sp.identity(d ** (site - cursor), format="csr"), format="csr")
            op = sp.kron(op, sp.csr_matrix(mats[name]), format="csr")
            cursor = site + 1
        if cursor < n:
            op = sp.kron(op, sp.identity(d ** (n - cursor), format="csr"), format="csr")
        H = H + t.coeff * op
    return H.tocsr()


def to_dense(terms: TermList) -> np.ndarray:
    if terms.dim > MAX_DENSE_DIM:
        raise DimensionError(terms.dim, MAX_DENSE_DIM, "dense")
    return to_sparse(terms).toarray()


# ---------- Gauss 扇区 ----------


def project_gauss(
    terms: TermList, gauss: Sequence[TermList], charges: Sequence[int]
) -> SectorOperator:
    """把哈密顿量限制到所有 Gauss 生成元取给定相位 ω^q 的共同本征空间。

    在每个格点的 τ 本征基下生成元是对角单项式，直接按基矢筛选。
    """
    if len(gauss) != len(charges):
        raise ValueError("gauss 与 charges 长度不一致")
    n, N = terms.chain_length, terms.N
    alg = clock_matrices(N)
    dim = terms.dim
    if dim > MAX_SPARSE_DIM:
        raise DimensionError(dim, MAX_SPARSE_DIM, "project_gauss")

    idx = np.arange(dim)
    digits: dict[int, np.ndarray] = {}

    def digit(site: int) -> np.ndarray:
        if site not in digits:
            digits[site] = (idx // N ** (n - 1 - site)) % N
        return digits[site]

    mask = np.ones(dim, dtype=bool)
    for gen, q in zip(gauss, charges):
        if len(gen) != 1:
            raise ValueError("Gauss 生成元必须是单项式")
        (term,) = gen.terms
        phase = np.zeros(dim, dtype=np.int64)
        for site, name in term.factors:
            exps = monomial_exponents(name, N)
            if exps is None or exps[0] != 0:
                raise ValueError(f"Gauss 生成元只能含 τ/η 幂次: {name}")
            phase += exps[1] * digit(site)
        mask &= (phase - q) % N == 0
    basis = np.flatnonzero(mask)
    if basis.size == 0:
        raise SectorError(f"电荷 {list(charges)} 对应的 Gauss 扇区为空")

    H = to_sparse(terms, basis_change=alg.fourier)
    sub = H[basis][:, basis].tocsr()
    label = "gauss q=" + ",".join(str(q % N) for q in charges)
    logger.info("Gauss 扇区维数 %d / %d", basis.size, dim)
    return SectorOperator(sub, basis, N, n, label)


# ---------- 对角化 ----------


def dense_spectrum(op: TermList | SectorOperator, k: int | None = None) -> SpectrumResult:
    """稠密对角化，返回最低 k 个本征值（k 为空时返回全谱）。"""
    if isinstance(op, SectorOperator):
        if op.dim > MAX_DENSE_DIM:
            raise DimensionError(op.dim, MAX_DENSE_DIM, "dense")
        H, label = op.matrix.toarray(), op.label
    else:
        H, label = to_dense(op), "full"
    herm_err = np.abs(H - H.conj().T).max() if H.size else 0.0
    if herm_err > 1e-10:
        raise ValueError(f"哈密顿量非 Hermitian，误差 {herm_err:.3e}")
    w, v = np.linalg.eigh(H)
    k = len(w) if k is None else min(k, len(w))
    return SpectrumResult(w[:k], v[:, 0] if len(w) else None, label)


def sparse_ground(
    op: TermList | SectorOperator,
    tol: float = 1e-10,
    k: int = 1,
    seed: int = 0,
    maxiter: int | None = None,
) -> SpectrumResult:
    """隐式重启 Lanczos（ARPACK）求最低 k 个本征对，起始向量由 seed 确定。"""
    if k > 10:
        raise ValueError("只支持 k ≤ 10 个低能态")
    if isinstance(op, SectorOperator):
        dim, label = op.dim, op.label
        A: LinearOperator | sp.csr_matrix = op.matrix
    else:
        dim, label = op.dim, "full"
        if dim > MAX_SPARSE_DIM:
            raise DimensionError(dim, MAX_SPARSE_DIM, "sparse")
        A = as_linear_operator(op)
    if dim <= SMALL_DIM or k >= dim - 1:
        res = dense_spectrum(op, k)
        return SpectrumResult(res.eigenvalues, res.ground_vector, label, 0.0)

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    try:
        w, v = eigsh(A, k=k, which="SA", v0=v0, tol=tol, maxiter=maxiter)
    except ArpackNoConvergence as e:
        best = None
        if e.eigenvalues is not None and len(e.eigenvalues):
            j = int(np.argmin(e.eigenvalues))
            x = e.eigenvectors[:, j]
            best = float(np.linalg.norm(A @ x - e.eigenvalues[j] * x))
        raise ConvergenceError("Lanczos 未收敛", best_residual=best) from e
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    x = v[:, 0]
    residual = float(np.linalg.norm(A @ x - w[0] * x))
    if residual > max(tol, 1e-12) * max(1.0, abs(w[0])) * 1e3:
        logger.warning("基态残差 %.3e 偏大", residual)
    return SpectrumResult(w, x, label, residual)


def ground_state(op: TermList | SectorOperator, engine: str = "auto", **kwargs) -> SpectrumResult:
    dim = op.dim
    if engine == "dense" or (engine == "auto" and dim <= 2048):
        return dense_spectrum(op, kwargs.get("k", 1))
    return sparse_ground(op, **kwargs)


def ground_degeneracy(eigenvalues: Sequence[float], tol: float = 1e-8) -> int:
    """与基态能量相差不超过 tol 的本征值个数。"""
    w = np.sort(np.asarray(eigenvalues, dtype=float))
    return int(np.sum(w - w[0] <= tol))


def product_state_energy(terms: TermList, states: Sequence[np.ndarray]) -> float:
    """乘积态 ⊗φ_i 上的 ⟨H⟩，逐项计算局域期望之积。"""
    if len(states) != terms.chain_length:
        raise ValueError("乘积态长度与链长不一致")
    mats = local_matrices(terms, terms.N)
    phis = [np.asarray(s, dtype=complex) / np.linalg.norm(s) for s in states]
    total = 0j
    for t in terms:
        val = t.coeff
        for site, name in t.factors:
            val *= np.vdot(phis[site], mats[name] @ phis[site])
        total += val
    return float(total.real)


# ---------- 稠密态 ----------


@dataclass
class DenseState:
    """ED 得到的态矢量，提供与 MPS 相同的期望值接口。"""

    vector: np.ndarray
    N: int
    chain_length: int

    def expect(self, ops: Sequence[tuple[int, np.ndarray]]) -> complex:
        d, n = self.N, self.chain_length
        psi = self.vector.reshape((d,) * n)
        phi = psi
        for site, mat in ops:
            phi = np.moveaxis(np.tensordot(mat, phi, axes=([1], [site])), 0, site)
        return complex(np.vdot(psi, phi) / np.vdot(psi, psi))

    def overlap(self, other: DenseState) -> complex:
        if self.vector.shape != other.vector.shape:
            raise ValueError("态矢量维数不一致")
        a, b = self.vector, other.vector
        return complex(np.vdot(a, b) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real))


def dense_state(terms: TermList, result: SpectrumResult) -> DenseState:
    return DenseState(result.ground_vector, terms.N, terms.chain_length)


def sector_state(op: SectorOperator, vector: np.ndarray) -> DenseState:
    """扇区内（τ 本征基）的向量嵌回完整乘积基。"""
    n, N = op.chain_length, op.N
    full = np.zeros(N**n, dtype=complex)
    full[op.basis] = vector
    psi = full.reshape((N,) * n)
    F = clock_matrices(N).fourier
    for site in range(n):
        psi = np.moveaxis(np.tensordot(F, psi, axes=([1], [site])), 0, site)
    return DenseState(psi.reshape(-1), N, n)


def clock_two_copy_check(spec: LadderSpec, couplings: Couplings) -> tuple[float, float]:
    """N=4 时钟极限与同 λ 的 N=2 模型的基态能量，二者应相等。"""
    e = []
    for N in (4, 2):
        s = spec.model_copy(update={"N": N})
        e.append(ground_state(build_clock_limit(s, couplings)).ground_energy)
    return e[0], e[1]
