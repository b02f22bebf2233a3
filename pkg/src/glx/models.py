"""Model specifications for the four Gaussian interface models."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

from .errors import ParameterError

KINDS = ("dgff", "membrane", "massive", "fractional")


@dataclass(frozen=True)
class ModelSpec:
    """Which interface model, and its parameters.

    ``theta`` is the killing rate of the massive field, ``s`` and ``rho`` the
    index and scale of the stable law behind the fractional field.
    """

    kind: str
    d: int
    theta: Optional[float] = None
    s: Optional[float] = None
    rho: float = 1.0

    def __post_init__(self):
        validate_model(self)

    @classmethod
    def dgff(cls, d: int = 3) -> "ModelSpec":
        return cls("dgff", d)

    @classmethod
    def membrane(cls, d: int = 5) -> "ModelSpec":
        return cls("membrane", d)

    @classmethod
    def massive(cls, d: int = 2, theta: float = 0.3) -> "ModelSpec":
        return cls("massive", d, theta=theta)

    @classmethod
    def fractional(cls, d: int = 2, s: float = 1.0, rho: float = 1.0) -> "ModelSpec":
        return cls("fractional", d, s=s, rho=rho)

    @property
    def decay_power(self) -> Optional[float]:
        """Exponent p with g(x) ~ C |x|^(-p); None for exponential decay."""
        return {"dgff": self.d - 2, "membrane": self.d - 4,
                "fractional": None if self.s is None else self.d - self.s}.get(self.kind)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(**{k: data[k] for k in ("kind", "d", "theta", "s", "rho") if k in data})

    def label(self) -> str:
        extra = ""
        if self.kind == "massive":
            extra = f"_theta{self.theta:g}"
        elif self.kind == "fractional":
            extra = f"_s{self.s:g}_rho{self.rho:g}"
        return f"{self.kind}_d{self.d}{extra}"


def validate_model(m: ModelSpec) -> None:
    if m.kind not in KINDS:
        raise ParameterError(f"unknown model kind {m.kind!r}; expected one of {KINDS}")
    if not isinstance(m.d, int) or m.d < 1:
        raise ParameterError(f"dimension must be a positive integer, got {m.d!r}")
    if m.kind == "dgff" and m.d < 3:
        raise ParameterError("dgff requires d>=3 (supercritical)")
    if m.kind == "membrane" and m.d < 5:
        raise ParameterError("membrane requires d>=5 (supercritical)")
    if m.kind == "massive":
        if m.theta is None or not 0.0 < m.theta < 1.0:
            raise ParameterError("massive requires a killing rate theta in (0,1)")
    if m.kind == "fractional":
        if m.s is None or not 0.0 < m.s < min(2.0, m.d):
            raise ParameterError("fractional requires 0 < s < min(2,d)")
        if not m.rho > 0:
            raise ParameterError("fractional requires rho > 0")
