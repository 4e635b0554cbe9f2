"""Named parameter bundles for the standard jump regimes."""

from __future__ import annotations

from types import MappingProxyType

from .errors import ConfigError
from .model import SystemParams

PRESETS = MappingProxyType(
    {
        # blockade: weak transition resonant
        "fig2a": SystemParams(omega_e=0.2, omega_r=0.005, delta_r=0.0, v_nn=0.1),
        # anti-blockade: delta_r = V
        "fig2b": SystemParams(omega_e=0.2, omega_r=0.005, delta_r=0.1, v_nn=0.1),
        # collective jumps, omega_r = omega_e
        "fig2c": SystemParams(omega_e=0.1, omega_r=0.1, delta_r=0.0, v_nn=0.4),
        # survival-curve example, single atom
        "fig6": SystemParams(omega_e=0.2, omega_r=0.2, delta_r=0.0, v_nn=0.0),
        # 87Rb 60S numbers: V = 0.2 gamma_e, Rydberg lifetime ~ 1e4 / gamma_e
        "rb87": SystemParams(omega_e=0.2, omega_r=0.005, delta_r=0.0, v_nn=0.2, gamma_r=1e-4),
    }
)


def get_preset(name: str) -> SystemParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
