"""项目内统一的异常类型。

参数校验失败仍然直接抛 ValueError；这里只放需要携带额外信息
（配置键名、维度、残差、能量历史、缺失输入）的异常。
"""


class ZnLadderError(Exception):
    """所有自定义异常的基类。"""


class ConfigError(ZnLadderError):
    """配置非法，key 为出错的配置项名称。"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"配置项 {key!r}: {message}")


class DimensionError(ZnLadderError):
    """Hilbert 空间维度超过当前引擎允许的上限。"""

    def __init__(self, dim: int, limit: int, engine: str = ""):
        self.dim = dim
        self.limit = limit
        where = f"{engine} " if engine else ""
        super().__init__(f"{where}Hilbert 空间维度 {dim} 超过上限 {limit}")


class SectorError(ZnLadderError):
    """Gauss 约束下的扇区为空（电荷分配不自洽）。"""


class ConvergenceError(ZnLadderError):
    """迭代求解未收敛。best_residual / history 为最后可用的诊断信息。"""

    def __init__(
        self,
        message: str,
        best_residual: float | None = None,
        history: list[float] | None = None,
    ):
        self.best_residual = best_residual
        self.history = list(history) if history is not None else []
        super().__init__(message)


class MissingInputError(ZnLadderError):
    """report 所需记录在结果库中不存在。"""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__("缺少输入: " + ", ".join(self.missing))
