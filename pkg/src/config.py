"""
KappaConfig: the complete parameter set of one kappa evaluation.
"""
import json
import logging
import os
from fractions import Fraction
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .mollifier import MollifierSpec, PolySpec
from .utils import ConfigError, digest

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
THETA_MAX = Fraction(4, 7)


class PolyInput(BaseModel):
    """Polynomial as written in a config file."""
    model_config = ConfigDict(extra="forbid")

    basis: Literal["monomial", "p1", "q_odd"] = "monomial"
    coeffs: List[float]
    sign: Optional[int] = None


class KappaConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    schema_version: int = Field(SCHEMA_VERSION, alias="schemaVersion")
    d: int = Field(ge=0)
    K: int = Field(ge=0)
    theta: float = float(THETA_MAX)
    R: float
    mollifier: Literal["feng", "general"] = "feng"
    P: Dict[str, PolyInput]
    Q: PolyInput
    quad_order: int = Field(64, alias="quadOrder", ge=4, le=512)

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"schemaVersion must be {SCHEMA_VERSION}, got {value}")
        return value

    @field_validator("theta")
    @classmethod
    def _admissible_theta(cls, value: float) -> float:
        if not 0 < value <= float(THETA_MAX) + 1e-12:
            raise ValueError(f"theta must lie in (0, 4/7], got {value}")
        return value

    @field_validator("R")
    @classmethod
    def _positive_R(cls, value: float) -> float:
        if value <= 0:
            raise ValueError(f"R must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _polynomials_admissible(self) -> "KappaConfig":
        # raises ConfigError on any constraint violation
        self.mollifier_spec()
        self.q_spec()
        return self

    def q_spec(self) -> PolySpec:
        return PolySpec.from_basis(self.Q.basis, self.Q.coeffs, "Q")

    def poly_specs(self) -> Dict[str, PolySpec]:
        main_key = "P1" if self.mollifier == "feng" else "P0"
        specs = {}
        for key, poly in self.P.items():
            constraint = "P0" if key == main_key else "Pk"
            specs[key] = PolySpec.from_basis(poly.basis, poly.coeffs, constraint, poly.sign)
        return specs

    def mollifier_spec(self) -> MollifierSpec:
        return MollifierSpec(
            d=self.d,
            K=self.K,
            theta=self.theta,
            polynomials=self.poly_specs(),
            squarefree_restricted=self.mollifier == "feng",
            layout=self.mollifier,
        )

    def to_json(self) -> Dict:
        return self.model_dump(by_alias=True, mode="json", exclude_none=True)

    def digest(self) -> str:
        return digest(self.to_json())

    def updated(self, **changes) -> "KappaConfig":
        """Validated copy with some top-level fields replaced."""
        payload = self.to_json()
        payload.update(changes)
        return parse_config(payload)


def parse_config(payload: Dict) -> KappaConfig:
    """
    Raises:
        ConfigError: if the payload does not describe an admissible config
    """
    try:
        return KappaConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"Invalid config: {e}")


def load_config(path: str) -> KappaConfig:
    if not os.path.exists(path):
        raise ConfigError(f"Config file {path} does not exist")
    try:
        with open(path, "r") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    config = parse_config(payload)
    logger.info(f"Loaded config {path} (digest {config.digest()[:12]})")
    return config


def save_config(config: KappaConfig, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(config.to_json(), f, sort_keys=True, indent=2)
        f.write("\n")
