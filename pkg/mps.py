"""矩阵乘积态：正则化、期望值、重叠、纠缠熵与二进制检查点。

张量约定 A[i] 形状为 (左键, 物理, 右键)。center 记录正交中心位置，
None 表示尚未正则化。
"""

from __future__ import annotations

import logging
import struct
from collections.abc import Sequence
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"ZNMPS\0"
FORMAT_VERSION = 1


class MPS:
    def __init__(self, tensors: Sequence[np.ndarray], center: int | None = None):
        if not tensors:
            raise ValueError("MPS 至少需要一个格点")
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.center = center
        self.truncation_errors: list[float] = []
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"相邻张量键维不匹配: {a.shape} / {b.shape}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("开边界 MPS 两端键维必须为 1")

    @classmethod
    def random(cls, length: int, d: int, bond: int, rng: np.random.Generator) -> MPS:
        """随机 MPS，键维受 min(bond, d^i, d^(L-i)) 限制，右正则化后返回。"""
        dims = [1]
        for i in range(1, length):
            dims.append(min(bond, d**i, d ** (length - i)))
        dims.append(1)
        tensors = [
            rng.standard_normal((dims[i], d, dims[i + 1]))
            + 1j * rng.standard_normal((dims[i], d, dims[i + 1]))
            for i in range(length)
        ]
        psi = cls(tensors)
        psi.canonicalize(0)
        psi.normalize()
        return psi

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> MPS:
        tensors = [np.asarray(v, dtype=complex).reshape(1, -1, 1) for v in vectors]
        psi = cls(tensors)
        psi.canonicalize(0)
        psi.normalize()
        return psi

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> MPS:
        psi = MPS([t.copy() for t in self.tensors], self.center)
        psi.truncation_errors = list(self.truncation_errors)
        return psi

    # ---------- 正则化 ----------

    def _shift_right(self, i: int) -> None:
        A = self.tensors[i]
        Dl, d, Dr = A.shape
        Q, R = np.linalg.qr(A.reshape(Dl * d, Dr))
        self.tensors[i] = Q.reshape(Dl, d, Q.shape[1])
        self.tensors[i + 1] = np.tensordot(R, self.tensors[i + 1], axes=(1, 0))

    def _shift_left(self, i: int) -> None:
        B = self.tensors[i]
        Dl, d, Dr = B.shape
        Q, R = np.linalg.qr(B.reshape(Dl, d * Dr).conj().T)
        self.tensors[i] = Q.conj().T.reshape(Q.shape[1], d, Dr)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], R.conj().T, axes=(2, 0))

    def canonicalize(self, center: int = 0) -> None:
        """左侧左正则、右侧右正则，正交中心放在 center。"""
        for i in range(center):
            self._shift_right(i)
        for i in range(len(self) - 1, center, -1):
            self._shift_left(i)
        self.center = center

    def move_center(self, site: int) -> None:
        if self.center is None:
            self.canonicalize(site)
            return
        while self.center < site:
            self._shift_right(self.center)
            self.center += 1
        while self.center > site:
            self._shift_left(self.center)
            self.center -= 1

    def norm(self) -> float:
        if self.center is None:
            return float(np.sqrt(abs(overlap_raw(self, self))))
        return float(np.linalg.norm(self.tensors[self.center]))

    def normalize(self) -> None:
        if self.center is None:
            self.canonicalize(0)
        self.tensors[self.center] /= np.linalg.norm(self.tensors[self.center])

    def check_canonical(self, atol: float = 1e-12) -> tuple[bool, str]:
        """检查正交中心两侧的等距条件，返回 (是否通过, 错误信息)。"""
        if self.center is None:
            return False, "尚未正则化"
        for i, A in enumerate(self.tensors):
            Dl, d, Dr = A.shape
            if i < self.center:
                M = A.reshape(Dl * d, Dr)
                err = np.abs(M.conj().T @ M - np.eye(Dr)).max()
            elif i > self.center:
                M = A.reshape(Dl, d * Dr)
                err = np.abs(M @ M.conj().T - np.eye(Dl)).max()
            else:
                continue
            if err > atol:
                return False, f"格点 {i} 等距误差 {err:.3e}"
        return True, ""

    # ---------- 期望值 ----------

    def expect(self, ops: Sequence[tuple[int, np.ndarray]]) -> complex:
        """算符串 ∏ O_i 的期望值。正交中心移到串的最左端，只收缩串覆盖的区间。"""
        if not ops:
            return 1.0 + 0j
        ops = sorted(ops, key=lambda x: x[0])
        first, last = ops[0][0], ops[-1][0]
        self.move_center(first)
        table = dict(ops)
        Dl = self.tensors[first].shape[0]
        env = np.eye(Dl, dtype=complex)
        for i in range(first, last + 1):
            A = self.tensors[i]
            T = np.tensordot(env, A, axes=(1, 0))
            if i in table:
                T = np.tensordot(table[i], T, axes=(1, 1)).transpose(1, 0, 2)
            env = np.tensordot(A.conj(), T, axes=([0, 1], [0, 1]))
        norm2 = np.vdot(self.tensors[first], self.tensors[first]).real
        return complex(np.trace(env) / norm2)

    def schmidt_values(self, cut: int) -> np.ndarray:
        """格点 cut 与 cut+1 之间键上的 Schmidt 系数（归一化）。"""
        if not 0 <= cut < len(self) - 1:
            raise ValueError(f"键指标 {cut} 超出 0..{len(self) - 2}")
        self.move_center(cut)
        A = self.tensors[cut]
        s = np.linalg.svd(A.reshape(-1, A.shape[2]), compute_uv=False)
        return s / np.linalg.norm(s)

    def to_dense(self) -> np.ndarray:
        psi = self.tensors[0]
        for A in self.tensors[1:]:
            psi = np.tensordot(psi, A, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)


def overlap_raw(a: MPS, b: MPS) -> complex:
    if len(a) != len(b) or a.d != b.d:
        raise ValueError(f"MPS 形状不一致: 长度 {len(a)}/{len(b)}，局域维数 {a.d}/{b.d}")
    env = np.ones((1, 1), dtype=complex)
    for A, B in zip(a.tensors, b.tensors):
        T = np.tensordot(env, B, axes=(1, 0))
        env = np.tensordot(A.conj(), T, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def overlap(a: MPS, b: MPS) -> complex:
    """归一化后的 ⟨a|b⟩。"""
    na = overlap_raw(a, a).real
    nb = overlap_raw(b, b).real
    return overlap_raw(a, b) / np.sqrt(na * nb)


def entanglement_entropy(psi: MPS, cut: int) -> float:
    """冯诺依曼熵 S = -Σ s² log s²。"""
    p = psi.schmidt_values(cut) ** 2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def entropy_profile(psi: MPS, cuts: Sequence[int]) -> list[float]:
    return [entanglement_entropy(psi, c) for c in cuts]


# ---------- 检查点 ----------


def save_mps(psi: MPS, path: str | Path, layout_hash: bytes) -> None:
    """二进制检查点：魔数、版本、局域维数、链长、布局哈希、键维、张量（小端 complex128）。"""
    if len(layout_hash) != 32:
        raise ValueError("布局哈希必须为 32 字节")
    dims = [1] + psi.bond_dims + [1]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, psi.d, len(psi)))
        f.write(layout_hash)
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        for A in psi.tensors:
            f.write(np.ascontiguousarray(A, dtype="<c16").tobytes(order="C"))


def load_mps(path: str | Path, layout_hash: bytes | None = None) -> MPS:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path} 不是 MPS 检查点")
    pos = len(MAGIC)
    version, d, length = struct.unpack_from("<III", data, pos)
    pos += 12
    if version != FORMAT_VERSION:
        raise ValueError(f"不支持的检查点版本 {version}")
    stored_hash = data[pos : pos + 32]
    pos += 32
    if layout_hash is not None and stored_hash != layout_hash:
        raise ValueError("检查点的布局哈希与当前模型不一致")
    dims = struct.unpack_from(f"<{length + 1}I", data, pos)
    pos += 4 * (length + 1)
    tensors = []
    for i in range(length):
        shape = (dims[i], d, dims[i + 1])
        count = int(np.prod(shape))
        A = np.frombuffer(data, dtype="<c16", count=count, offset=pos).reshape(shape)
        tensors.append(A.astype(complex))
        pos += 16 * count
    psi = MPS(tensors)
    psi.canonicalize(0)
    return psi
