"""Geometry and Rician channel synthesis for the S -> STAR-RIS -> U_i cascade."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator
from numpy.typing import NDArray

USERS = ("c", "s")
# Rician factors at or above this are treated as the pure line-of-sight limit.
LOS_ONLY_K = 1e9


class GeometryError(ValueError):
    """Raised for degenerate node placements."""


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


@dataclass(frozen=True)
class SystemGeometry:
    """Node coordinates (metres) and STAR-RIS panel layout."""

    c_S: tuple[float, float, float] = (0.0, 0.0, 10.0)
    c_R: tuple[float, float, float] = (35.0, 20.0, 10.0)
    c_Uc: tuple[float, float, float] = (40.0, 0.0, 0.0)
    c_Us: tuple[float, float, float] = (40.0, 40.0, 0.0)
    N_v: int = 4
    N_h: int = 4
    spacing_ratio: float = 0.5

    def __post_init__(self) -> None:
        for name in ("c_S", "c_R", "c_Uc", "c_Us"):
            coords = tuple(float(x) for x in getattr(self, name))
            if len(coords) != 3 or not all(np.isfinite(coords)):
                raise GeometryError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, coords)
        if int(self.N_v) < 1 or int(self.N_h) < 1:
            raise GeometryError("N_v and N_h must be positive")
        object.__setattr__(self, "N_v", int(self.N_v))
        object.__setattr__(self, "N_h", int(self.N_h))
        if not self.spacing_ratio > 0:
            raise GeometryError("spacing_ratio must be positive")
        for name in ("c_S", "c_Uc", "c_Us"):
            if getattr(self, name) == self.c_R:
                raise GeometryError(f"{name} coincides with c_R")

    @property
    def N(self) -> int:
        return self.N_v * self.N_h

    def with_elements(self, N_v: int, N_h: int) -> "SystemGeometry":
        return SystemGeometry(self.c_S, self.c_R, self.c_Uc, self.c_Us, N_v, N_h, self.spacing_ratio)


@dataclass(frozen=True)
class ChannelParams:
    """Large-scale channel, noise and transmit parameters (dB/dBm as given)."""

    rho_db: float = -30.0
    alpha1: float = 2.5
    alpha2: float = 2.5
    rician_k_db: float = 3.0
    noise_power_dbm_c: float = -80.0
    noise_power_dbm_s: float = -80.0
    transmit_power_dbm: float = 30.0
    bandwidth_hz: float = 1.4e6

    def __post_init__(self) -> None:
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError("path-loss exponents must be positive")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")
        if np.isnan(self.rician_k_db):
            raise ValueError("rician_k_db must not be NaN")
        for name in ("rho_db", "noise_power_dbm_c", "noise_power_dbm_s", "transmit_power_dbm"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def rho(self) -> float:
        return db_to_linear(self.rho_db)

    @property
    def rician_k(self) -> float:
        return db_to_linear(self.rician_k_db)

    @property
    def transmit_power_mw(self) -> float:
        return db_to_linear(self.transmit_power_dbm)

    def noise_power_mw(self, user: str) -> float:
        if user == "c":
            return db_to_linear(self.noise_power_dbm_c)
        if user == "s":
            return db_to_linear(self.noise_power_dbm_s)
        raise ValueError(f"unknown user {user!r}")

    def snr_scale(self, user: str) -> float:
        """P / sigma_i^2, the factor turning |v^H h_i|^2 into an SNR."""
        return self.transmit_power_mw / self.noise_power_mw(user)


@dataclass(frozen=True)
class GeometryAngles:
    d_SR: float
    d_Rc: float
    d_Rs: float
    phi_SR: float
    phi_Rc: float
    phi_Rs: float
    varphi_SR: float
    varphi_Rc: float
    varphi_Rs: float


@dataclass(frozen=True)
class ChannelRealization:
    """Sampled per-hop channels and their cascades h_i = diag(h_Ri) h_SR."""

    h_SR: NDArray[np.complex128]
    h_Rc: NDArray[np.complex128]
    h_Rs: NDArray[np.complex128]
    h_c: NDArray[np.complex128] = field(init=False)
    h_s: NDArray[np.complex128] = field(init=False)

    def __post_init__(self) -> None:
        arrays = [np.asarray(a, dtype=np.complex128) for a in (self.h_SR, self.h_Rc, self.h_Rs)]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("channel vectors must be 1-D with equal length")
        for name, arr in zip(("h_SR", "h_Rc", "h_Rs"), arrays):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        h_c = arrays[1] * arrays[0]
        h_s = arrays[2] * arrays[0]
        h_c.setflags(write=False)
        h_s.setflags(write=False)
        object.__setattr__(self, "h_c", h_c)
        object.__setattr__(self, "h_s", h_s)

    @property
    def N(self) -> int:
        return self.h_SR.shape[0]

    def cascade(self, user: str) -> NDArray[np.complex128]:
        if user == "c":
            return self.h_c
        if user == "s":
            return self.h_s
        raise ValueError(f"unknown user {user!r}")


def _link_angles(src: tuple[float, ...], ris: tuple[float, ...], pair: str) -> tuple[float, float, float]:
    diff = np.asarray(src) - np.asarray(ris)
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        raise GeometryError(f"coincident nodes for link {pair}")
    xy = float(np.linalg.norm(diff[:2]))
    if xy == 0.0:
        raise GeometryError(f"zero horizontal separation for link {pair}; azimuth undefined")
    elevation = float(np.arcsin(diff[2] / dist))
    azimuth = float(np.arccos(np.clip(diff[0] / xy, -1.0, 1.0)))
    return dist, elevation, azimuth


def compute_geometry(geo: SystemGeometry) -> GeometryAngles:
    """Distances and elevation/azimuth angles of the three links, seen from the STAR-RIS."""
    d_SR, phi_SR, varphi_SR = _link_angles(geo.c_S, geo.c_R, "S-R")
    d_Rc, phi_Rc, varphi_Rc = _link_angles(geo.c_Uc, geo.c_R, "R-Uc")
    d_Rs, phi_Rs, varphi_Rs = _link_angles(geo.c_Us, geo.c_R, "R-Us")
    return GeometryAngles(d_SR, d_Rc, d_Rs, phi_SR, phi_Rc, phi_Rs, varphi_SR, varphi_Rc, varphi_Rs)


def array_response(phi: float, varphi: float, geo: SystemGeometry) -> NDArray[np.complex128]:
    """UPA steering vector a(phi, varphi): vertical (x) horizontal Kronecker product."""
    k = 2.0 * np.pi * geo.spacing_ratio
    vert = np.exp(-1j * k * np.arange(geo.N_v) * np.sin(phi) * np.cos(varphi))
    horiz = np.exp(-1j * k * np.arange(geo.N_h) * np.sin(phi) * np.sin(varphi))
    return np.kron(vert, horiz)


def _rician_link(
    distance: float,
    exponent: float,
    los: NDArray[np.complex128],
    params: ChannelParams,
    rng: Generator,
) -> NDArray[np.complex128]:
    n = los.shape[0]
    nlos = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    K = params.rician_k
    scale = np.sqrt(params.rho * distance ** (-exponent))
    if K >= LOS_ONLY_K:
        return scale * los
    return scale * (np.sqrt(K / (1.0 + K)) * los + np.sqrt(1.0 / (1.0 + K)) * nlos)


def sample_rician(
    angles: GeometryAngles,
    params: ChannelParams,
    geo: SystemGeometry,
    rng: Generator,
) -> ChannelRealization:
    """Draw one realization of h_SR, h_Rc, h_Rs (in that order from ``rng``)."""
    h_SR = _rician_link(angles.d_SR, params.alpha1, array_response(angles.phi_SR, angles.varphi_SR, geo), params, rng)
    h_Rc = _rician_link(angles.d_Rc, params.alpha2, array_response(angles.phi_Rc, angles.varphi_Rc, geo), params, rng)
    h_Rs = _rician_link(angles.d_Rs, params.alpha2, array_response(angles.phi_Rs, angles.varphi_Rs, geo), params, rng)
    return ChannelRealization(h_SR, h_Rc, h_Rs)


def draw_channel(geo: SystemGeometry, params: ChannelParams, rng: Generator) -> ChannelRealization:
    return sample_rician(compute_geometry(geo), params, geo, rng)
