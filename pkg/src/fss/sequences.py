"""Pulse protocols (Rabi, ESR scan, Ramsey, Hahn echo, spin pumping, T1) and
their simulation against the two-level or four-level physics models.

A Protocol is pure data (kind + parameters + scan axes) so it can round-trip
through the scenario config format.  ``simulate_protocol`` binds a protocol
to a physics description and an inhomogeneous ensemble and returns one signal
value per scan point, with scan points safe to evaluate under a parallel map
(results are always assembled in scan order).

Nuclear-spin cooling stages are not simulated dynamically; a CoolingSpec
carries the cooling parameters as metadata and contributes only its resulting
T2* to the detuning ensemble.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import models
from .core import DensityMatrix, Drive, LindbladModel, evolve, evolve_batch, expectation
from .ensemble import (
    EnsembleSpec,
    combined_sigma,
    ensemble_average,
    gaussian_sigma,
    quadrature_nodes,
    weighted_average,
)
from .errors import UsageError
from .models import FaradayParams, TwoToneDrive, build_two_level
from .raman import JonesVector, jones_through_waveplates, stokes
from .units import ghz_to_angular, mhz_to_angular

# Serrodyne phase convention: the ramp advances the second pi/2 pulse phase so
# that the fitted fringe frequency is delta + f_serr (both positive adding).
# The ramp starts from a quadrature (pi/2) reference, making the contrast a
# pure sine of the delay as in the serrodyne fringe fits.
_SERR_SIGN = -1.0
_SERR_REFERENCE = -math.pi / 2

PROTOCOL_KINDS = (
    "rabi",
    "esr_scan",
    "ramsey",
    "hahn_echo",
    "spin_pumping",
    "t1",
    "rabi_q",
    "polarization_map",
)


@dataclass(frozen=True)
class PulseSegment:
    kind: str  # initialize | drive | wait | readout
    omega_mhz: float = 0.0
    delta_mhz: float = 0.0
    phase: float = 0.0
    duration_ns: float = 0.0
    target: str | None = None

    def __post_init__(self):
        if self.kind not in ("initialize", "drive", "wait", "readout"):
            raise UsageError(f"unknown segment kind {self.kind!r}")
        if self.duration_ns < 0:
            raise UsageError("segment duration must be >= 0")
        if self.kind == "wait" and self.omega_mhz != 0:
            raise UsageError("wait segments carry no drive")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[PulseSegment, ...]


@dataclass(frozen=True)
class CoolingSpec:
    """Nuclear-spin cooling stage; only ``resulting_t2star_ns`` affects simulation."""

    method: str
    resulting_t2star_ns: float
    omega_cool_mhz: float = 0.0
    omega_cool_ghz: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("raman", "rabi", "algorithmic", "modified-algorithmic"):
            raise UsageError(f"unknown cooling method {self.method!r}")
        if self.resulting_t2star_ns <= 0:
            raise UsageError("resulting T2* must be > 0")


@dataclass(frozen=True)
class Protocol:
    """Scan description: protocol kind, fixed parameters, named scan axes."""

    kind: str
    params: dict
    axes: tuple[tuple[str, np.ndarray], ...]
    signal: str
    cooling: CoolingSpec | None = None

    def __post_init__(self):
        if self.kind not in PROTOCOL_KINDS:
            raise UsageError(f"unknown protocol kind {self.kind!r}")
        axes = tuple((name, np.asarray(vals, dtype=float)) for name, vals in self.axes)
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(vals) for _, vals in self.axes)

    def axis(self, name: str) -> np.ndarray:
        for n, vals in self.axes:
            if n == name:
                return vals
        raise UsageError(f"protocol has no axis {name!r}")

    def shots(self, **point) -> list[PulseSequence]:
        """Pulse sequences run at one scan point (documentation/inspection)."""
        return _shots_for(self, point)


@dataclass(frozen=True)
class TwoLevelPhysics:
    gamma1_mhz: float = 0.0
    gamma2_mhz: float = 0.0
    epsilon_init: float = 0.0

    def __post_init__(self):
        if self.gamma1_mhz < 0 or self.gamma2_mhz < 0:
            raise UsageError("rates must be >= 0")
        if not 0 <= self.epsilon_init < 1:
            raise UsageError("initialization infidelity must be in [0, 1)")


@dataclass
class ScanResult:
    axes: tuple[tuple[str, np.ndarray], ...]
    signal: np.ndarray
    name: str = ""
    extras: dict = field(default_factory=dict)

    def axis(self, name: str) -> np.ndarray:
        for n, vals in self.axes:
            if n == name:
                return vals
        raise UsageError(f"result has no axis {name!r}")


# --- protocol constructors ------------------------------------------------------

def rabi_protocol(omega_mhz: float, delta_mhz: float, tau_grid_ns) -> Protocol:
    """Initialize |up>, drive for tau, read out |down>; scanned over tau."""
    tau = np.asarray(tau_grid_ns, dtype=float)
    return Protocol(
        kind="rabi",
        params={"omega_mhz": omega_mhz, "delta_mhz": delta_mhz},
        axes=(("tau_ns", tau),),
        signal="population",
    )


def esr_scan_protocol(
    omega_mhz: float,
    tau_ns: float | None,
    omega_grid_ghz,
    stark_ratio: float,
    omega_e0_ghz: float,
) -> Protocol:
    """Fixed-duration probe versus drive frequency; the resonance sits at
    omega_e0 + stark_ratio * Omega.  With ``tau_ns`` omitted the probe runs
    for the pi time 1/(2 Omega)."""
    grid = np.asarray(omega_grid_ghz, dtype=float)
    return Protocol(
        kind="esr_scan",
        params={
            "omega_mhz": omega_mhz,
            "tau_ns": tau_ns if tau_ns else 1e3 / (2.0 * omega_mhz),
            "stark_ratio": stark_ratio,
            "omega_e0_ghz": omega_e0_ghz,
        },
        axes=(("omega_ghz", grid),),
        signal="population",
    )


def ramsey_protocol(
    omega_mhz: float,
    delta_mhz: float,
    tau_grid_ns,
    f_serr_mhz: float = 0.0,
    balanced: bool = True,
    cooling: CoolingSpec | None = None,
) -> Protocol:
    """Two pi/2 pulses separated by tau; balanced contrast via a phase-pi pair.

    A nonzero serrodyne frequency advances the second pulse phase linearly in
    tau, shifting the fringe frequency to delta + f_serr.
    """
    tau = np.asarray(tau_grid_ns, dtype=float)
    return Protocol(
        kind="ramsey",
        params={
            "omega_mhz": omega_mhz,
            "delta_mhz": delta_mhz,
            "f_serr_mhz": f_serr_mhz,
            "balanced": balanced,
        },
        axes=(("tau_ns", tau),),
        signal="contrast" if balanced else "population",
        cooling=cooling,
    )


def hahn_echo_protocol(
    omega_mhz: float,
    total_delay_grid_ns,
    t2he_ns: float | None = None,
    modulation_amp_mhz: float = 0.0,
    modulation_freq_mhz: float = 0.0,
    modulation_phases: int = 1,
    modulation_mode: str = "refocus",
    cooling: CoolingSpec | None = None,
) -> Protocol:
    """Ramsey pair with a refocusing pi pulse halfway through the delay T.

    With only a static detuning ensemble the echo holds contrast at ~1; decay
    enters through the optional phenomenological envelope exp(-(T/T2HE)^2) or
    an injected sinusoidal detuning modulation (amplitude and frequency in
    MHz).  Modulation modes: "refocus" phase-locks the modulation to the pi
    pulse, so the echo contrast oscillates at the modulation frequency itself
    (the signature of a nuclear mode kicked by the refocusing pulse); "free"
    runs the modulation from sequence start and averages over
    ``modulation_phases`` initial phases, which dephases the echo at even
    orders only (spectral weight at half the modulation frequency).
    """
    if modulation_mode not in ("refocus", "free"):
        raise UsageError("modulation_mode must be 'refocus' or 'free'")
    grid = np.asarray(total_delay_grid_ns, dtype=float)
    return Protocol(
        kind="hahn_echo",
        params={
            "omega_mhz": omega_mhz,
            "t2he_ns": t2he_ns,
            "modulation_amp_mhz": modulation_amp_mhz,
            "modulation_freq_mhz": modulation_freq_mhz,
            "modulation_phases": modulation_phases,
            "modulation_mode": modulation_mode,
        },
        axes=(("total_delay_ns", grid),),
        signal="contrast",
        cooling=cooling,
    )


def spin_pumping_protocol(s: float, duration_ns: float, points: int = 161) -> Protocol:
    """Resonant single-tone pumping of |down> -> trion; time-binned emission."""
    if s < 0:
        raise UsageError("saturation parameter must be >= 0")
    if duration_ns <= 0:
        raise UsageError("duration must be > 0")
    return Protocol(
        kind="spin_pumping",
        params={"s": s},
        axes=(("t_ns", np.linspace(0.0, duration_ns, points)),),
        signal="emission",
    )


def t1_protocol(delay_grid_ns) -> Protocol:
    """Initialize, wait a variable delay, read out; exponential at rate Gamma1."""
    grid = np.asarray(delay_grid_ns, dtype=float)
    return Protocol(
        kind="t1",
        params={},
        axes=(("delay_ns", grid),),
        signal="population",
    )


def rabi_q_protocol(
    omega_grid_mhz,
    di_over_i_grid,
    gamma2_mhz: float = 4.2,
    gamma1_per_omega: float = 0.0048,
    stark_ratio: float = -7.4,
    t2star_ns: float = 34.0,
) -> Protocol:
    """Quality factor of Rabi oscillations versus drive and intensity noise."""
    return Protocol(
        kind="rabi_q",
        params={
            "gamma2_mhz": gamma2_mhz,
            "gamma1_per_omega": gamma1_per_omega,
            "stark_ratio": stark_ratio,
            "t2star_ns": t2star_ns,
        },
        axes=(
            ("omega_mhz", np.asarray(omega_grid_mhz, dtype=float)),
            ("di_over_i", np.asarray(di_over_i_grid, dtype=float)),
        ),
        signal="qfactor",
    )


def polarization_map_protocol(hwp_grid_deg, qwp_grid_deg) -> Protocol:
    """Stokes S3 of the drive beam over waveplate angles (no spin dynamics)."""
    return Protocol(
        kind="polarization_map",
        params={},
        axes=(
            ("hwp_deg", np.asarray(hwp_grid_deg, dtype=float)),
            ("qwp_deg", np.asarray(qwp_grid_deg, dtype=float)),
        ),
        signal="s3",
    )


def _shots_for(p: Protocol, point: dict) -> list[PulseSequence]:
    q = p.params
    if p.kind == "rabi":
        tau = float(point.get("tau_ns", p.axes[0][1][0]))
        return [PulseSequence((
            PulseSegment("initialize", target="up"),
            PulseSegment("drive", q["omega_mhz"], q["delta_mhz"], 0.0, tau),
            PulseSegment("readout", target="down"),
        ))]
    if p.kind == "esr_scan":
        w = float(point.get("omega_ghz", p.axes[0][1][0]))
        delta = (w - (q["omega_e0_ghz"] + q["stark_ratio"] * q["omega_mhz"] * 1e-3)) * 1e3
        return [PulseSequence((
            PulseSegment("initialize", target="up"),
            PulseSegment("drive", q["omega_mhz"], delta, 0.0, q["tau_ns"]),
            PulseSegment("readout", target="down"),
        ))]
    if p.kind == "ramsey":
        tau = float(point.get("tau_ns", p.axes[0][1][0]))
        t_half = 1e3 / (4.0 * q["omega_mhz"])
        serr = _SERR_SIGN * (2.0 * math.pi * q["f_serr_mhz"] * 1e-3 * tau
                            + (_SERR_REFERENCE if q["f_serr_mhz"] else 0.0))
        shots = []
        for extra in (0.0, math.pi) if q["balanced"] else (0.0,):
            shots.append(PulseSequence((
                PulseSegment("initialize", target="up"),
                PulseSegment("drive", q["omega_mhz"], q["delta_mhz"], 0.0, t_half),
                PulseSegment("wait", 0.0, q["delta_mhz"], 0.0, tau),
                PulseSegment("drive", q["omega_mhz"], q["delta_mhz"], serr + extra, t_half),
                PulseSegment("readout", target="down"),
            )))
        return shots
    if p.kind == "hahn_echo":
        big_t = float(point.get("total_delay_ns", p.axes[0][1][0]))
        t_half = 1e3 / (4.0 * q["omega_mhz"])
        shots = []
        for extra in (0.0, math.pi):
            shots.append(PulseSequence((
                PulseSegment("initialize", target="up"),
                PulseSegment("drive", q["omega_mhz"], 0.0, 0.0, t_half),
                PulseSegment("wait", 0.0, 0.0, 0.0, big_t / 2),
                PulseSegment("drive", q["omega_mhz"], 0.0, math.pi / 2, 2 * t_half),
                PulseSegment("wait", 0.0, 0.0, 0.0, big_t / 2),
                PulseSegment("drive", q["omega_mhz"], 0.0, extra, t_half),
                PulseSegment("readout", target="down"),
            )))
        return shots
    if p.kind == "t1":
        delay = float(point.get("delay_ns", p.axes[0][1][0]))
        return [PulseSequence((
            PulseSegment("initialize", target="up"),
            PulseSegment("wait", 0.0, 0.0, 0.0, delay),
            PulseSegment("readout", target="down"),
        ))]
    raise UsageError(f"protocol kind {p.kind!r} has no sequence representation")


# --- simulation -----------------------------------------------------------------

def _parallel_map(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _rotation_unitary(theta: float, phase: float) -> np.ndarray:
    axis = math.cos(phase) * models.SIGMA_X + math.sin(phase) * models.SIGMA_Y
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * axis


def _apply_unitary(rho: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    return DensityMatrix(u @ rho.matrix @ u.conj().T)


def _init_state(eps: float) -> DensityMatrix:
    return DensityMatrix.from_populations([eps, 1.0 - eps])


def _resolve_sigma(protocol: Protocol, ensemble: EnsembleSpec | None) -> tuple[float, int]:
    if ensemble is not None:
        return combined_sigma(ensemble), ensemble.nodes
    if protocol.cooling is not None:
        return gaussian_sigma(protocol.cooling.resulting_t2star_ns), 21
    return 0.0, 21


def simulate_protocol(
    protocol: Protocol,
    physics,
    ensemble: EnsembleSpec | None = None,
    ideal_pulses: bool = False,
    detune_pulses: bool = True,
    counts_per_shot: float = 0.0,
    seed: int | None = None,
    threads: int = 1,
    handedness: str = "sigma-",
) -> ScanResult:
    """Simulate a protocol, returning the signal per scan point.

    ``physics`` is a TwoLevelPhysics (Rabi/Ramsey/echo/ESR/T1 families) or a
    FaradayParams (spin pumping, four-level Rabi).  Deterministic for fixed
    inputs; when ``counts_per_shot`` > 0 a seeded generator draws Poisson
    counts per shot (``seed`` is then required).
    """
    if counts_per_shot > 0 and seed is None:
        raise UsageError("shot-noise sampling requires a seed")
    rng = np.random.default_rng(seed) if counts_per_shot > 0 else None

    if protocol.kind == "polarization_map":
        return _simulate_polarization_map(protocol)
    if protocol.kind == "spin_pumping":
        if not isinstance(physics, FaradayParams):
            raise UsageError("spin pumping requires FaradayParams physics")
        return _simulate_spin_pumping(protocol, physics, handedness)
    if protocol.kind == "rabi_q":
        if not isinstance(physics, TwoLevelPhysics):
            raise UsageError("the intensity-noise Q scan runs on the two-level model")
        return _simulate_rabi_q(protocol, physics, ensemble, threads)

    if isinstance(physics, FaradayParams):
        if protocol.kind != "rabi":
            raise UsageError(f"four-level physics supports rabi/spin_pumping, not {protocol.kind}")
        return _simulate_rabi_faraday(protocol, physics, ensemble, handedness)
    if not isinstance(physics, TwoLevelPhysics):
        raise UsageError("physics must be TwoLevelPhysics or FaradayParams")

    sigma, nodes = _resolve_sigma(protocol, ensemble)
    dispatch = {
        "rabi": _simulate_rabi,
        "esr_scan": _simulate_esr,
        "ramsey": _simulate_ramsey,
        "hahn_echo": _simulate_echo,
        "t1": _simulate_t1,
    }
    try:
        fn = dispatch[protocol.kind]
    except KeyError:
        raise UsageError(f"cannot simulate protocol kind {protocol.kind!r}") from None
    result = fn(protocol, physics, sigma, nodes, ideal_pulses, detune_pulses, threads)
    if rng is not None:
        result = _apply_counts(result, counts_per_shot, rng)
    return result


def _apply_counts(result: ScanResult, counts_per_shot: float, rng) -> ScanResult:
    if "n_phi" in result.extras:
        n0 = rng.poisson(np.clip(result.extras["n_phi"], 0, None) * counts_per_shot)
        n1 = rng.poisson(np.clip(result.extras["n_phi_pi"], 0, None) * counts_per_shot)
        tot = np.where(n0 + n1 > 0, n0 + n1, 1)
        contrast = (n0 - n1) / tot
        return replace(result, signal=contrast.astype(float),
                       extras={**result.extras, "counts_phi": n0, "counts_phi_pi": n1})
    counts = rng.poisson(np.clip(result.signal, 0, None) * counts_per_shot)
    return replace(result, signal=counts.astype(float), extras={**result.extras})


def _avg_population_batched(build_model, sigma, nodes, grid, skip, rho0, level=0):
    """Gaussian-ensemble average of a population trace, integrating all
    quadrature nodes in one batched RK45 run (static models only)."""
    if sigma == 0.0:
        traj = evolve(build_model(0.0), rho0, grid)
        return traj.population(level)[skip:]
    offsets, weights = quadrature_nodes(sigma, nodes)
    models = [build_model(d) for d in offsets]
    trajs = evolve_batch(models, [rho0] * len(models), grid)
    return weighted_average(weights, [t.population(level)[skip:] for t in trajs])


def _simulate_rabi(protocol, phys, sigma, nodes, ideal_pulses, detune_pulses, threads):
    tau = protocol.axis("tau_ns")
    if tau.size == 0:
        return ScanResult(protocol.axes, np.empty(0))
    grid = tau if tau[0] == 0.0 else np.concatenate([[0.0], tau])
    skip = 0 if tau[0] == 0.0 else 1
    q = protocol.params

    def make(offset_mhz: float):
        return build_two_level(q["omega_mhz"], q["delta_mhz"] + offset_mhz,
                               phys.gamma1_mhz, phys.gamma2_mhz)

    signal = _avg_population_batched(make, sigma, nodes, grid, skip,
                                     _init_state(phys.epsilon_init))
    return ScanResult(protocol.axes, signal)


def _simulate_t1(protocol, phys, sigma, nodes, ideal_pulses, detune_pulses, threads):
    delay = protocol.axis("delay_ns")
    grid = delay if delay[0] == 0.0 else np.concatenate([[0.0], delay])
    skip = 0 if delay[0] == 0.0 else 1
    model = build_two_level(0.0, 0.0, phys.gamma1_mhz, phys.gamma2_mhz)
    traj = evolve(model, _init_state(phys.epsilon_init), grid)
    return ScanResult(protocol.axes, traj.population(0)[skip:])


def _simulate_esr(protocol, phys, sigma, nodes, ideal_pulses, detune_pulses, threads):
    omegas = protocol.axis("omega_ghz")
    q = protocol.params
    center = q["omega_e0_ghz"] + q["stark_ratio"] * q["omega_mhz"] * 1e-3

    rho0 = _init_state(phys.epsilon_init)
    grid = np.array([0.0, q["tau_ns"]])

    def point(w_ghz: float) -> float:
        delta = (w_ghz - center) * 1e3

        def make(offset_mhz: float):
            return build_two_level(q["omega_mhz"], delta + offset_mhz,
                                   phys.gamma1_mhz, phys.gamma2_mhz)

        return float(_avg_population_batched(make, sigma, nodes, grid, 1, rho0)[-1])

    signal = np.array(_parallel_map(point, list(omegas), threads))
    return ScanResult(protocol.axes, signal)


def _ramsey_node_populations(q, phys, tau, offset_mhz, ideal_pulses, detune_pulses):
    """Readout populations (n_phi, n_phi_pi) vs tau for one detuning offset."""
    omega = q["omega_mhz"]
    delta = q["delta_mhz"]
    t_half = 1e3 / (4.0 * omega)
    pulse_delta = (delta if detune_pulses else 0.0) + offset_mhz
    wait_grid = tau if tau[0] == 0.0 else np.concatenate([[0.0], tau])
    skip = 0 if tau[0] == 0.0 else 1

    wait_model = build_two_level(0.0, delta + offset_mhz, phys.gamma1_mhz, phys.gamma2_mhz)
    if ideal_pulses:
        u90 = _rotation_unitary(math.pi / 2, 0.0)
        state = _apply_unitary(_init_state(phys.epsilon_init), u90)
    else:
        pulse1 = build_two_level(omega, pulse_delta, phys.gamma1_mhz, phys.gamma2_mhz)
        state = evolve(pulse1, _init_state(phys.epsilon_init), np.array([0.0, t_half])).final_state
    free = evolve(wait_model, state, wait_grid)

    f_serr = q["f_serr_mhz"]
    reference = _SERR_REFERENCE if f_serr else 0.0
    n0 = np.empty(tau.size)
    n1 = np.empty(tau.size)
    for i, t in enumerate(tau):
        rho = free.states[i + skip]
        phi2 = _SERR_SIGN * (2.0 * math.pi * f_serr * 1e-3 * t + reference)
        if ideal_pulses:
            n0[i] = _apply_unitary(rho, _rotation_unitary(math.pi / 2, phi2)).population(0)
            n1[i] = _apply_unitary(rho, _rotation_unitary(math.pi / 2, phi2 + math.pi)).population(0)
        else:
            for j, extra in enumerate((0.0, math.pi)):
                pulse2 = build_two_level(omega, pulse_delta, phys.gamma1_mhz,
                                         phys.gamma2_mhz, phase=phi2 + extra)
                out = evolve(pulse2, rho, np.array([0.0, t_half])).final_state
                (n0 if j == 0 else n1)[i] = out.population(0)
    return np.stack([n0, n1])


def _simulate_ramsey(protocol, phys, sigma, nodes, ideal_pulses, detune_pulses, threads):
    tau = protocol.axis("tau_ns")
    q = protocol.params

    def one(offset_mhz: float) -> np.ndarray:
        return _ramsey_node_populations(q, phys, tau, offset_mhz, ideal_pulses, detune_pulses)

    pops = ensemble_average(one, sigma, nodes)
    n0, n1 = pops[0], pops[1]
    if q["balanced"]:
        signal = (n0 - n1) / (n0 + n1)
        return ScanResult(protocol.axes, signal, extras={"n_phi": n0, "n_phi_pi": n1})
    return ScanResult(protocol.axes, n0, extras={"n_phi": n0})


def _echo_node_populations(q, phys, big_t_grid, offset_mhz, mod_phase, ideal_pulses, detune_pulses):
    omega = q["omega_mhz"]
    t_half = 1e3 / (4.0 * omega)
    amp = q["modulation_amp_mhz"]
    freq = q["modulation_freq_mhz"]
    locked = q.get("modulation_mode", "refocus") == "refocus"
    base = build_two_level(0.0, offset_mhz, phys.gamma1_mhz, phys.gamma2_mhz)

    def modulated(t_ref: float) -> LindbladModel:
        if amp == 0.0:
            return base
        w_mod = mhz_to_angular(amp)
        f_ang = mhz_to_angular(freq)

        def env(t: float) -> complex:
            return 0.5 * w_mod * math.cos(f_ang * (t - t_ref) + mod_phase)

        return LindbladModel(
            dim=2, h0=base.h0, channels=base.channels,
            drives=(Drive(env, models.SIGMA_Z / 2, frequency_scale=f_ang),),
            labels=base.labels,
        )

    # phase-locked mode: modulation starts at the refocusing pulse only
    first_model = base if locked else modulated(0.0)
    grid = np.asarray(big_t_grid, dtype=float)
    halves = grid / 2.0
    half_grid = halves if halves[0] == 0.0 else np.concatenate([[0.0], halves])
    skip = 0 if halves[0] == 0.0 else 1

    if ideal_pulses:
        state0 = _apply_unitary(_init_state(phys.epsilon_init), _rotation_unitary(math.pi / 2, 0.0))
    else:
        pulse = build_two_level(omega, offset_mhz if detune_pulses else 0.0,
                                phys.gamma1_mhz, phys.gamma2_mhz)
        state0 = evolve(pulse, _init_state(phys.epsilon_init), np.array([0.0, t_half])).final_state
    first_half = evolve(first_model, state0, half_grid)

    n0 = np.empty(grid.size)
    n1 = np.empty(grid.size)
    u_pi = _rotation_unitary(math.pi, math.pi / 2)
    for i, big_t in enumerate(grid):
        rho = first_half.states[i + skip]
        if ideal_pulses:
            rho = _apply_unitary(rho, u_pi)
        else:
            pulse_pi = build_two_level(omega, offset_mhz if detune_pulses else 0.0,
                                       phys.gamma1_mhz, phys.gamma2_mhz, phase=math.pi / 2)
            rho = evolve(pulse_pi, rho, np.array([0.0, 2 * t_half])).final_state
        if big_t > 0:
            second_model = modulated(big_t / 2) if locked else first_model
            rho = evolve(second_model, rho, np.array([big_t / 2, big_t])).final_state
        for j, extra in enumerate((0.0, math.pi)):
            if ideal_pulses:
                out = _apply_unitary(rho, _rotation_unitary(math.pi / 2, extra))
            else:
                pulse2 = build_two_level(omega, offset_mhz if detune_pulses else 0.0,
                                         phys.gamma1_mhz, phys.gamma2_mhz, phase=extra)
                out = evolve(pulse2, rho, np.array([0.0, t_half])).final_state
            (n0 if j == 0 else n1)[i] = out.population(0)
    return np.stack([n0, n1])


def _simulate_echo(protocol, phys, sigma, nodes, ideal_pulses, detune_pulses, threads):
    grid = protocol.axis("total_delay_ns")
    q = protocol.params
    phase_count = int(q["modulation_phases"]) if q["modulation_amp_mhz"] else 1
    phases = 2.0 * math.pi * np.arange(phase_count) / max(phase_count, 1)

    def one(offset_mhz: float) -> np.ndarray:
        acc = np.zeros((2, grid.size))
        for ph in phases:
            acc += _echo_node_populations(q, phys, grid, offset_mhz, ph, ideal_pulses, detune_pulses)
        return acc / len(phases)

    pops = ensemble_average(one, sigma, nodes)
    n0, n1 = pops[0], pops[1]
    contrast = (n0 - n1) / (n0 + n1)
    if q["t2he_ns"]:
        contrast = contrast * np.exp(-((grid / q["t2he_ns"]) ** 2))
    return ScanResult(protocol.axes, contrast, extras={"n_phi": n0, "n_phi_pi": n1})


def _simulate_spin_pumping(protocol, params: FaradayParams, handedness: str) -> ScanResult:
    tgrid = protocol.axis("t_ns")
    s = protocol.params["s"]
    tone = models.saturation_tone_mhz(params.gamma1_mhz, s)
    drive = TwoToneDrive(omega1_mhz=tone, omega2_mhz=0.0)
    model = models.build_faraday_four_level(params, drive, handedness)
    grid = tgrid if tgrid[0] == 0.0 else np.concatenate([[0.0], tgrid])
    skip = 0 if tgrid[0] == 0.0 else 1
    traj = evolve(model, DensityMatrix.pure(4, 0), grid)
    gamma1_ang = mhz_to_angular(params.gamma1_mhz)
    emission = gamma1_ang * (traj.population(2) + traj.population(3))[skip:]
    return ScanResult(protocol.axes, emission)


def _simulate_rabi_faraday(protocol, params: FaradayParams, ensemble, handedness) -> ScanResult:
    tau = protocol.axis("tau_ns")
    q = protocol.params
    drive, rf = models.calibrate_faraday_drive(params, q["omega_mhz"], handedness)
    if q["delta_mhz"]:
        drive = replace(drive, delta_rf_ghz=drive.delta_rf_ghz + q["delta_mhz"] * 1e-3)
    sigma, nodes = _resolve_sigma(protocol, ensemble)
    flip = models.faraday_flip_projector(params)
    grid = tau if tau[0] == 0.0 else np.concatenate([[0.0], tau])
    skip = 0 if tau[0] == 0.0 else 1

    def one(offset_mhz: float) -> np.ndarray:
        model = models.build_faraday_four_level(params, drive, handedness,
                                                splitting_offset_mhz=offset_mhz)
        traj = evolve(model, DensityMatrix.pure(4, 1), grid, rtol=1e-9, atol=1e-12)
        return np.array([expectation(st, flip) for st in traj.states])[skip:]

    signal = ensemble_average(one, sigma, min(nodes, 9))
    return ScanResult(protocol.axes, signal, extras={"delta_rf_ghz": np.array([rf])})


def faraday_pi_contrast(
    params: FaradayParams,
    omega_mhz: float,
    t2star_ns: float,
    nodes: int = 9,
    handedness: str = "sigma-",
) -> models.PiContrast:
    """Beat-averaged pi contrast of the calibrated four-level model under a
    static detuning ensemble; the readout counts trion weight by branching."""
    drive, _ = models.calibrate_faraday_drive(params, omega_mhz, handedness)
    flip = models.faraday_flip_projector(params)
    t_pi = 1e3 / (2 * omega_mhz)
    beat = 2 * math.pi / abs(ghz_to_angular(drive.delta_rf_ghz))
    offsets = (np.arange(16) / 16.0 - 0.5) * beat
    tgrid = np.unique(np.concatenate([[0.0], np.clip(t_pi + offsets, 0.0, None)]))

    def one(offset_mhz: float) -> float:
        model = models.build_faraday_four_level(params, drive, handedness,
                                                splitting_offset_mhz=offset_mhz)
        traj = evolve(model, DensityMatrix.pure(4, 1), tgrid, rtol=1e-9, atol=1e-12)
        return float(np.mean([expectation(s, flip) for s in traj.states[1:]]))

    f_pi = float(ensemble_average(one, gaussian_sigma(t2star_ns), nodes))
    return models.pi_contrast_and_q(f_pi)


def two_level_pi_contrast(
    omega_mhz: float,
    gamma1_mhz: float,
    gamma2_mhz: float,
    t2star_ns: float | None = None,
    sigma_mhz: float | None = None,
    nodes: int = 21,
) -> models.PiContrast:
    """Pi contrast of the driven two-level model under a static detuning ensemble."""
    if sigma_mhz is None:
        sigma_mhz = gaussian_sigma(t2star_ns) if t2star_ns else 0.0
    t_pi = 1e3 / (2 * omega_mhz)

    def make(offset_mhz: float):
        return build_two_level(omega_mhz, offset_mhz, gamma1_mhz, gamma2_mhz)

    f_pi = float(_avg_population_batched(make, sigma_mhz, nodes,
                                         np.array([0.0, t_pi]), 1,
                                         DensityMatrix.pure(2, 1))[-1])
    return models.pi_contrast_and_q(f_pi)


def _simulate_rabi_q(protocol, phys: TwoLevelPhysics, ensemble, threads) -> ScanResult:
    omegas = protocol.axis("omega_mhz")
    noises = protocol.axis("di_over_i")
    q = protocol.params
    base_nodes = ensemble.nodes if ensemble is not None else 21
    jitter = ensemble.correlated_rabi_jitter if ensemble is not None else False
    points = [(float(w), float(di)) for w in omegas for di in noises]

    def point(args) -> tuple[float, float]:
        w, di = args
        gamma1 = q["gamma1_per_omega"] * w
        spec = EnsembleSpec(t2star_ns=q["t2star_ns"], stark_ratio=q["stark_ratio"],
                            omega_mhz=w, di_over_i=di, nodes=base_nodes)
        if jitter and di > 0:
            f_pi = _f_pi_with_rabi_jitter(w, gamma1, q["gamma2_mhz"], spec)
        else:
            f_pi = two_level_pi_contrast(w, gamma1, q["gamma2_mhz"],
                                         sigma_mhz=combined_sigma(spec), nodes=base_nodes).f_pi
        return f_pi, models.pi_contrast_and_q(f_pi).q

    out = _parallel_map(point, points, threads)
    f_pi = np.array([o[0] for o in out]).reshape(len(omegas), len(noises))
    qual = np.array([o[1] for o in out]).reshape(len(omegas), len(noises))
    return ScanResult(protocol.axes, qual, extras={"f_pi": f_pi})


def _f_pi_with_rabi_jitter(omega_mhz, gamma1_mhz, gamma2_mhz, spec: EnsembleSpec) -> float:
    """Sensitivity variant: intensity fluctuations co-vary with the Rabi amplitude."""
    t_pi = 1e3 / (2 * omega_mhz)
    eps_nodes, eps_w = quadrature_nodes(spec.di_over_i, 9)
    oh_sigma = gaussian_sigma(spec.t2star_ns)

    total = 0.0
    for eps, we in zip(eps_nodes, eps_w):
        omega_i = omega_mhz * (1.0 + eps)
        delta_laser = spec.stark_ratio * omega_mhz * eps

        def one(offset_mhz: float) -> float:
            model = build_two_level(omega_i, delta_laser + offset_mhz, gamma1_mhz, gamma2_mhz)
            traj = evolve(model, DensityMatrix.pure(2, 1), np.array([0.0, t_pi]))
            return traj.population(0)[-1]

        total += we * float(ensemble_average(one, oh_sigma, spec.nodes))
    return total


def _simulate_polarization_map(protocol) -> ScanResult:
    hwp = protocol.axis("hwp_deg")
    qwp = protocol.axis("qwp_deg")
    state = JonesVector.horizontal()
    out = np.empty((hwp.size, qwp.size))
    for i, hw in enumerate(hwp):
        for j, qw in enumerate(qwp):
            out[i, j] = stokes(jones_through_waveplates(state, hw, qw)).s3
    return ScanResult(protocol.axes, out)


# --- spin-pumping analysis --------------------------------------------------------

@dataclass(frozen=True)
class PumpingAnalysis:
    """Both readings of a pumping trace, reflecting the trion-occupation ambiguity.

    ``fitted_decay_ns`` is the raw exponential time of the simulated emission;
    ``branch_time_ns`` is 1/gamma_SP of the model; ``occupation_factor`` is the
    quasi-steady trion occupation s/(2(1+s)) relating the two (the raw decay is
    slower than the branch time by roughly that factor).
    """

    s: float
    fitted_decay_ns: float
    branch_time_ns: float
    occupation_factor: float
    times_ns: np.ndarray
    emission: np.ndarray


def spin_pumping_analysis(
    params: FaradayParams,
    s: float,
    duration_ns: float,
    points: int = 161,
    handedness: str = "sigma-",
) -> PumpingAnalysis:
    """Run the pumping protocol and fit the emission tail to an exponential."""
    from .fitting import MODEL_LIBRARY, fit

    protocol = spin_pumping_protocol(s, duration_ns, points)
    res = simulate_protocol(protocol, params, handedness=handedness)
    t = res.axis("t_ns")
    y = res.signal
    # skip the trion turn-on transient before fitting the pumping tail
    mask = t > min(10.0 / mhz_to_angular(params.gamma1_mhz), 0.2 * duration_ns)
    tt, yy = t[mask], y[mask]
    tau0 = max((tt[-1] - tt[0]) / max(math.log(max(yy[0], 1e-30) / max(yy[-1], 1e-30)), 0.5), 1.0)
    out = fit(MODEL_LIBRARY["exp_decay"], tt, yy, {"amplitude": yy[0], "tau": tau0, "offset": yy[-1]})
    branch = 1.0 / mhz_to_angular(params.gamma_sp_mhz)
    return PumpingAnalysis(
        s=s,
        fitted_decay_ns=float(out["tau"]),
        branch_time_ns=float(branch),
        occupation_factor=s / (2.0 * (1.0 + s)) if s > 0 else 0.0,
        times_ns=t,
        emission=y,
    )
