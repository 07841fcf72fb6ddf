from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Boundary = Literal["rough", "smooth"]
Leg = Literal["up", "down"]
ModelKind = Literal["full", "unitary", "pure_axial", "pure_dual", "clock"]
TaskKind = Literal["ed", "dmrg", "rg", "sweep", "analytic", "report"]
PhaseName = Literal[
    "Deconfined",
    "Quadrupolar",
    "Coulomb",
    "Higgs",
    "FullyConfined",
    "ConfinedRungDominated",
    "unclassified",
]

SCHEMA_VERSION = 1


# ========== 几何与耦合 ==========


class StaticCharge(BaseModel):
    """静态电荷：顶点 (r, leg) 上的 Z_N 电荷 q。"""

    model_config = ConfigDict(frozen=True)

    r: int = Field(ge=1)
    leg: Leg
    q: int


class LadderSpec(BaseModel):
    """两腿梯子的几何：N、元胞数 L、左右边界与静态电荷。"""

    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=2)
    L: int = Field(ge=2)
    boundary_left: Boundary = "rough"
    boundary_right: Boundary = "smooth"
    static_charges: tuple[StaticCharge, ...] = ()

    @model_validator(mode="after")
    def _check_charges(self) -> "LadderSpec":
        for c in self.static_charges:
            if c.r > self.L:
                raise ValueError(f"静态电荷位置 r={c.r} 超出 1..{self.L}")
        total = sum(c.q for c in self.static_charges)
        if (
            self.boundary_left == "smooth"
            and self.boundary_right == "smooth"
            and total % self.N != 0
        ):
            raise ValueError(
                f"两端光滑边界时静态电荷总和须为 0 mod {self.N}，当前为 {total}"
            )
        return self

    def charge_at(self, r: int, leg: Leg) -> int:
        """顶点 (r, leg) 上的总静态电荷（mod N 之前）。"""
        return sum(c.q for c in self.static_charges if c.r == r and c.leg == leg)


class Couplings(BaseModel):
    """耦合常数 g、λ、左边界物质项 λ_b 与左边界 plaquette 的 g_b。"""

    model_config = ConfigDict(frozen=True)

    g: float = Field(default=1.0, ge=0)
    lam: float = Field(default=1.0, ge=0)
    lam_b: float = Field(default=0.0, ge=0)
    g_b: float | None = Field(default=None, gt=0)


# ========== DMRG 参数 ==========


class SweepStage(BaseModel):
    """单个 sweep 阶段：键维 m、密度矩阵噪声幅度、局部本征求解精度。"""

    m: int = Field(ge=1)
    noise: float = Field(default=0.0, ge=0)
    tol: float = Field(default=1e-10, gt=0)


class DmrgParams(BaseModel):
    """两格点 DMRG 参数。schedule 为空时按 max_bond 自动生成升键维计划。"""

    max_bond: int = Field(default=100, ge=1)
    schedule: list[SweepStage] = Field(default_factory=list)
    energy_tol: float = Field(default=1e-10, gt=0)
    max_sweeps: int = Field(default=20, ge=1)
    svd_min: float = Field(default=1e-14, ge=0)

    def stage(self, sweep: int) -> SweepStage:
        """第 sweep 次（从 0 计）使用的阶段；超出计划后沿用最后一个阶段。"""
        plan = self.schedule or self.default_schedule()
        st = plan[min(sweep, len(plan) - 1)]
        if st.m > self.max_bond:
            st = st.model_copy(update={"m": self.max_bond})
        return st

    def default_schedule(self) -> list[SweepStage]:
        m = self.max_bond
        return [
            SweepStage(m=min(m, 16), noise=1e-4),
            SweepStage(m=min(m, 32), noise=1e-5),
            SweepStage(m=min(m, 64), noise=1e-6),
            SweepStage(m=m, noise=1e-7),
            SweepStage(m=m, noise=0.0),
        ]

    def schedule_length(self) -> int:
        return len(self.schedule or self.default_schedule())


# ========== RG ==========


class RgThresholds(BaseModel):
    """RG 流的停止阈值与积分控制。upper 为空时按裸耦合自动确定。"""

    lower: float = Field(default=0.2, gt=0)
    upper: float | None = Field(default=None, gt=0)
    dl_max: float = Field(default=0.05, gt=0)
    l_max: float = Field(default=60.0, gt=0)
    rtol: float = Field(default=1e-8, gt=0)
    atol: float = Field(default=1e-10, gt=0)
    method: Literal["Radau", "RK45"] = "Radau"
    max_steps: int = Field(default=5000, ge=1)
    p0_convention: Literal["inverse_g", "linear_g"] = "inverse_g"


class PhaseLabel(BaseModel):
    """单条 RG 轨迹的分类结果。"""

    label: PhaseName
    winning: list[str]
    stop_ell: float
    stop_reason: str
    reliable: bool = True
    flags: list[str] = Field(default_factory=list)


# ========== 拟合与解析预言 ==========


class FitResult(BaseModel):
    """拟合结果：模型、参数、残差（对数空间或线性空间的均方根）与窗口。"""

    model: Literal[
        "exponential", "power_law", "cardy_entropy", "linear_in_sqrt_eps", "linear"
    ]
    params: dict[str, float]
    residual: float
    window: tuple[float, float]
    n_points: int
    flags: list[str] = Field(default_factory=list)


class Prediction(BaseModel):
    """闭式解析预言。formula 为公式标识，regime 记录所用的渐近区。"""

    name: str
    formula: str
    inputs: dict[str, float]
    value: float
    regime: str = ""
    note: str = ""


class FidelityResult(BaseModel):
    """保真度磁化率 χ_F 及步长减半后的收敛估计。"""

    param: float
    step: float
    chi: float | None
    chi_half: float | None
    rel_change: float | None
    overlap: float
    flags: list[str] = Field(default_factory=list)


class SusceptibilityResult(BaseModel):
    """χ_τ = (1/3L) ∂⟨H_τ⟩/∂g 与 χ_σ = (1/3L) ∂⟨H_tunnel⟩/∂λ 的中心差分。"""

    chi_tau: float
    chi_sigma: float
    chi_tau_half: float
    chi_sigma_half: float
    step: float


# ========== 运行配置与结果记录 ==========


class RunMeta(BaseModel):
    """每条记录携带的完整来源信息。"""

    model: ModelKind
    N: int
    L: int
    g: float
    lam: float
    lam_b: float = 0.0
    g_b: float | None = None
    boundary_left: Boundary = "rough"
    boundary_right: Boundary = "smooth"
    static_charges: list[StaticCharge] = Field(default_factory=list)
    m: int | None = None
    eps_trunc: float | None = None
    seed: int = 0


class ObservableRecord(BaseModel):
    """JSON-lines 结果库中的一行。key 为所属网格点的内容哈希。"""

    schema_version: int = SCHEMA_VERSION
    key: str
    task: str
    name: str
    args: dict[str, int | float | str] = Field(default_factory=dict)
    value: float | None = None
    imag: float = 0.0
    data: dict[str, float | str | list[float] | None] = Field(default_factory=dict)
    meta: RunMeta
    status: Literal["ok", "failed"] = "ok"
    message: str = ""


class RunConfig(BaseModel):
    """一次 CLI 运行的全部配置（配置文件 + 命令行覆盖）。"""

    task: TaskKind
    model: ModelKind = "unitary"
    N: int = Field(default=3, ge=2)
    L: int = Field(default=4, ge=2)
    g: float = Field(default=1.0, ge=0)
    lam: float = Field(default=1.0, ge=0)
    lam_b: float = Field(default=0.0, ge=0)
    g_b: float | None = Field(default=None, gt=0)
    g_grid: list[float] = Field(default_factory=list)
    lam_grid: list[float] = Field(default_factory=list)
    boundary_left: Boundary = "rough"
    boundary_right: Boundary = "smooth"
    static_charges: list[StaticCharge] = Field(default_factory=list)
    dmrg: DmrgParams = Field(default_factory=DmrgParams)
    rg: RgThresholds = Field(default_factory=RgThresholds)
    observables: list[str] = Field(default_factory=lambda: ["energy"])
    output: str = "results"
    seed: int = 0
    k: int = Field(default=1, ge=1, le=10)
    ed_engine: Literal["auto", "dense", "sparse"] = "auto"
    sweep_task: Literal["ed", "dmrg"] = "dmrg"
    max_workers: int = Field(default=1, ge=1, le=64)
    report_kind: str | None = None
    fidelity_param: Literal["lam", "g"] = "lam"
    fidelity_step: float = Field(default=1e-3, gt=0)
    susceptibility_step: float = Field(default=1e-2, gt=0)
    entropy_window: int | None = Field(default=None, ge=0)
    checkpoint: bool = False

    @model_validator(mode="after")
    def _check_compat(self) -> "RunConfig":
        if self.task in ("sweep", "rg") and not (self.g_grid and self.lam_grid):
            raise ValueError("sweep/rg 任务需要非空的 g_grid 与 lam_grid")
        if self.task == "report" and not self.report_kind:
            raise ValueError("report 任务需要 report_kind")
        if self.task in ("ed", "dmrg", "sweep") and self.model != "clock":
            if self.g <= 0 and not self.g_grid:
                raise ValueError(f"模型 {self.model} 需要 g > 0")
        if self.model in ("full", "unitary", "clock") and self.task in ("ed", "dmrg"):
            if self.lam <= 0:
                raise ValueError(f"模型 {self.model} 需要 lam > 0（纯规范理论请用 pure_axial）")
        if self.model == "pure_dual" and self.static_charges:
            raise ValueError("pure_dual 模型不支持静态电荷")
        if self.task == "dmrg" and self.model == "full":
            raise ValueError("DMRG 只在规范固定后的链上运行，请用 unitary/pure_axial/pure_dual/clock")
        return self

    def spec(self) -> LadderSpec:
        return LadderSpec(
            N=self.N,
            L=self.L,
            boundary_left=self.boundary_left,
            boundary_right=self.boundary_right,
            static_charges=tuple(self.static_charges),
        )

    def couplings(self, g: float | None = None, lam: float | None = None) -> Couplings:
        return Couplings(
            g=self.g if g is None else g,
            lam=self.lam if lam is None else lam,
            lam_b=self.lam_b,
            g_b=self.g_b,
        )
