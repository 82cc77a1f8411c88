"""
数据验证模型模块
~~~~~~~~~~~~~~~

使用Pydantic定义搜索盒、容差策略和尺度阶梯等可复用的验证模型。
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class BaseValidationModel(BaseModel):
    """基础验证模型，所有实例不可变"""
    model_config = ConfigDict(frozen=True)


class Box(BaseValidationModel):
    """轴对齐搜索盒 [lower, upper]"""
    lower: list[float] = Field(..., description="各坐标下界")
    upper: list[float] = Field(..., description="各坐标上界")

    @model_validator(mode="after")
    def validate_bounds(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower 与 upper 长度必须一致")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("每个坐标都必须满足 lower < upper")
        return self

    @classmethod
    def cube(cls, dim: int, low: float = -1.0, high: float = 1.0) -> "Box":
        return cls(lower=[low] * dim, upper=[high] * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """均匀采样，返回形状 (count, dim)"""
        return self.lo + (self.hi - self.lo) * rng.random((count, self.dim))

    def grid(self, per_axis: int) -> np.ndarray:
        """各轴 per_axis 个等距点的网格（含端点），返回形状 (per_axis^dim, dim)"""
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all((points >= self.lo - slack) & (points <= self.hi + slack), axis=-1)


class TolPolicy(BaseValidationModel):
    """
    数值秩的容差策略

    - relative(τ): τ·σ_max·max(rows, cols)
    - absolute(ε): ε
    - scaled(τ, floor): τ·max(σ_max, floor)·max(rows, cols)，矩阵整体很小时仍按 floor 判定
    """
    kind: Literal["relative", "absolute", "scaled"] = Field("relative", description="策略类型")
    value: float = Field(1e-8, gt=0, description="τ 或 ε")
    floor: float = Field(1.0, ge=0, description="scaled 策略的尺度下限")

    @classmethod
    def relative(cls, tau: float) -> "TolPolicy":
        return cls(kind="relative", value=tau)

    @classmethod
    def absolute(cls, eps: float) -> "TolPolicy":
        return cls(kind="absolute", value=eps)

    @classmethod
    def scaled(cls, tau: float, floor: float = 1.0) -> "TolPolicy":
        return cls(kind="scaled", value=tau, floor=floor)

    def tolerance(self, sigma_max, rows: int, cols: int):
        """按策略计算容差，sigma_max 可以是数组"""
        sigma_max = np.asarray(sigma_max, dtype=float)
        if self.kind == "absolute":
            return np.full_like(sigma_max, self.value)
        scale = sigma_max if self.kind == "relative" else np.maximum(sigma_max, self.floor)
        return self.value * scale * max(rows, cols)


class ScaleSpec(BaseValidationModel):
    """盒计数的几何尺度阶梯：从 diameter/2^coarsest_exponent 到 diameter/2^finest_exponent"""
    levels: int = Field(12, ge=4, description="阶梯层数")
    coarsest_exponent: float = Field(2.0, description="最粗尺度 = 直径 / 2^coarsest_exponent")
    finest_exponent: float = Field(14.0, description="最细尺度 = 直径 / 2^finest_exponent")
    discard: int = Field(1, ge=0, description="拟合时两端各丢弃的层数")
    saturation: float = Field(0.2, gt=0, le=1, description="盒数超过 saturation×点数 的层视为饱和，不参与拟合")

    @model_validator(mode="after")
    def validate_ladder(self):
        if self.finest_exponent <= self.coarsest_exponent:
            raise ValueError("finest_exponent 必须大于 coarsest_exponent")
        if self.levels - 2 * self.discard < 2:
            raise ValueError("丢弃两端后至少需要保留两层用于拟合")
        return self

    def epsilons(self, diameter: float) -> np.ndarray:
        exponents = np.linspace(self.coarsest_exponent, self.finest_exponent, self.levels)
        return diameter / 2.0 ** exponents


class SearchSpec(BaseValidationModel):
    """见证点搜索方式：网格（每轴 k 点）或随机多起点"""
    kind: Literal["grid", "multistart"] = Field("grid", description="搜索方式")
    per_axis: Optional[int] = Field(None, ge=2, description="网格每轴点数，缺省按维数取 65/17/9")
    starts: int = Field(64, ge=1, description="多起点个数")
    refine: int = Field(4, ge=0, description=(
        "δ(F,Z) 中投影到 F⁻¹(Z) 的网格点个数；见证搜索只细化残差最小的候选，为 0 时只做筛选"
    ))

    @field_validator("per_axis")
    @classmethod
    def validate_per_axis(cls, v):
        if v is not None and v > 4096:
            raise ValueError("网格每轴点数过大")
        return v

    def grid_size(self, dim: int) -> int:
        """每轴点数；缺省取奇数，对称盒的中心落在网格上"""
        if self.per_axis is not None:
            return self.per_axis
        if dim <= 2:
            return 65
        if dim <= 4:
            return 17
        return 9
