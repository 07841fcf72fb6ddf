"""项表到 MPO 的有限状态机编译。

键上的状态：
  0  START  左侧尚未放置任何算符（恒等）
  1  DONE   该项已全部放置（恒等）
  2+ 后缀状态：剩余待放置的算符串（系数已在首个因子处乘入）
剩余算符串相同的项共享同一个状态，因此 ∏_{j≥r} τ_j 这类一族非局域串
在每个键上只占一个通道。

张量约定 W[i] 形状为 (左键, 右键, 物理出, 物理入)。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from hamiltonian import Factor, TermList, local_matrices
from mps import MPS

logger = logging.getLogger(__name__)

START = ("__start__",)
DONE = ("__done__",)


@dataclass
class MPO:
    tensors: list[np.ndarray]
    d: int

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [W.shape[1] for W in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def matrix_element(self, bra: list[int] | np.ndarray, ket: list[int] | np.ndarray) -> complex:
        """乘积基 ⟨bra|H|ket⟩。"""
        v = np.ones(1, dtype=complex)
        for W, s, t in zip(self.tensors, bra, ket):
            v = v @ W[:, :, s, t]
        return complex(v[0])

    def to_dense(self) -> np.ndarray:
        T = self.tensors[0][0]  # (右键, 出, 入)
        for W in self.tensors[1:]:
            T = np.einsum("aij,abst->bisjt", T, W)
            b, i, s, j, t = T.shape
            T = T.reshape(b, i * s, j * t)
        return T[0]

    def expectation(self, psi: MPS) -> complex:
        """⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩。"""
        if len(psi) != len(self) or psi.d != self.d:
            raise ValueError("MPS 与 MPO 形状不一致")
        env = np.ones((1, 1, 1), dtype=complex)
        for A, W in zip(psi.tensors, self.tensors):
            env = contract_left(env, A, W)
        norm2 = psi.norm() ** 2
        return complex(env[0, 0, 0] / norm2)


def contract_left(env: np.ndarray, A: np.ndarray, W: np.ndarray) -> np.ndarray:
    """左环境 (bra, mpo, ket) 吸收一个格点。"""
    T = np.tensordot(env, A, axes=(2, 0))  # (a, w, s', b')
    T = np.tensordot(T, W, axes=([1, 2], [0, 3]))  # (a, b', x, s)
    T = np.tensordot(A.conj(), T, axes=([0, 1], [0, 3]))  # (b, b', x)
    return T.transpose(0, 2, 1)


def contract_right(env: np.ndarray, B: np.ndarray, W: np.ndarray) -> np.ndarray:
    """右环境 (bra, mpo, ket) 吸收一个格点。"""
    T = np.tensordot(B, env, axes=(2, 2))  # (a', s', c, y)
    T = np.tensordot(T, W, axes=([1, 3], [3, 1]))  # (a', c, x, s)
    T = np.tensordot(B.conj(), T, axes=([1, 2], [3, 1]))  # (a, a', x)
    return T.transpose(0, 2, 1)


def compile_mpo(terms: TermList) -> MPO:
    """按后缀共享的有限状态机把项表编译成 MPO。"""
    n, d = terms.chain_length, terms.N
    mats = local_matrices(terms, d)
    eye = np.eye(d, dtype=complex)
    # edges[i][(左状态, 右状态)] = 局域矩阵
    edges: list[dict[tuple, np.ndarray]] = [dict() for _ in range(n)]

    for t in terms:
        factors: tuple[Factor, ...] = t.factors or ((0, "id"),)
        ops = dict(factors)
        first, last = factors[0][0], factors[-1][0]
        left = START
        for i in range(first, last + 1):
            op = mats[ops[i]] if i in ops and ops[i] != "id" else eye
            right = DONE if i == last else tuple(f for f in factors if f[0] > i)
            if i == first:
                edges[i][(left, right)] = edges[i].get((left, right), 0) + t.coeff * op
            else:
                edges[i][(left, right)] = op
            left = right

    # 每个键上的状态编号：START、DONE 之后按字典序排列后缀
    states: list[dict[tuple, int]] = []
    for b in range(n - 1):
        suffixes = {r for (_, r) in edges[b] if r not in (START, DONE)}
        table = {START: 0, DONE: 1}
        for j, key in enumerate(sorted(suffixes, key=repr)):
            table[key] = j + 2
        states.append(table)

    tensors = []
    for i in range(n):
        left_table = {START: 0} if i == 0 else states[i - 1]
        right_table = {DONE: 0} if i == n - 1 else states[i]
        W = np.zeros((len(left_table), len(right_table), d, d), dtype=complex)
        if START in right_table:
            W[left_table[START], right_table[START]] = eye
        if DONE in left_table:
            W[left_table[DONE], right_table[DONE]] = eye
        for (lk, rk), op in edges[i].items():
            W[left_table[lk], right_table[rk]] += op
        tensors.append(W)
    mpo = MPO(tensors, d)
    logger.debug("MPO 编译完成，最大键维 %d", mpo.max_bond)
    return mpo


def mpo_product(a: MPO, b: MPO) -> MPO:
    """算符乘积 A·B 的 MPO，键维相乘。"""
    if len(a) != len(b) or a.d != b.d:
        raise ValueError("MPO 形状不一致")
    tensors = []
    for Wa, Wb in zip(a.tensors, b.tensors):
        W = np.einsum("abst,cdtu->acbdsu", Wa, Wb)
        la, lb, ra, rb = Wa.shape[0], Wb.shape[0], Wa.shape[1], Wb.shape[1]
        tensors.append(W.reshape(la * lb, ra * rb, a.d, a.d))
    return MPO(tensors, a.d)
