"""Nonlinear least-squares engine, the model-function library, and spectral analysis.

The optimizer is a damped least-squares (Levenberg-Marquardt) wrapper with
numeric Jacobians, plus a derivative-free simplex path for fits whose
residual evaluation is an ODE solve.  Standard errors come from the Jacobian
at the optimum, (J^T W J)^-1 scaled by the reduced chi-square; a singular
Jacobian produces a rank-deficiency report naming the unidentifiable
parameters instead of bogus error bars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .ensemble import FWHM_PER_SIGMA, gaussian_sigma
from .errors import DataError, DomainError, UsageError
from .units import GYROMAGNETIC_MHZ_PER_T

_RANK_TOL = 1e-9


@dataclass(frozen=True)
class FitModel:
    """Named model function y = f(x; params) with declared parameter names."""

    name: str
    param_names: tuple[str, ...]
    func: Callable
    units: tuple[str, ...] = ()
    bounds: tuple | None = None  # (lower array, upper array)

    def __call__(self, x, *params):
        return self.func(np.asarray(x, dtype=float), *params)


@dataclass
class FitResult:
    model: str
    param_names: tuple[str, ...]
    params: np.ndarray
    stderr: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    status: str
    n_eval: int
    unidentifiable: tuple[str, ...] = ()
    fixed: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        if name in self.fixed:
            return self.fixed[name]
        return float(self.params[self.param_names.index(name)])

    def error(self, name: str) -> float:
        if name in self.fixed:
            return 0.0
        return float(self.stderr[self.param_names.index(name)])

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "converged": self.converged,
            "status": self.status,
            "residual_norm": self.residual_norm,
            "n_eval": self.n_eval,
            "parameters": {
                name: {"value": self[name], "stderr": self.error(name)}
                for name in (*self.param_names, *self.fixed)
            },
            "unidentifiable": list(self.unidentifiable),
        }


def fit(
    model: FitModel,
    xdata,
    ydata,
    p0,
    yerr=None,
    fixed: dict | None = None,
    method: str = "auto",
    max_nfev: int = 2000,
) -> FitResult:
    """Weighted nonlinear least squares; deterministic for fixed inputs.

    ``fixed`` freezes named parameters at given values.  ``method`` is
    "auto" (Levenberg-Marquardt, falling back to trust-region when bounds
    are declared) or "simplex" for derivative-free minimization with errors
    from a finite-difference Jacobian at the optimum.
    """
    x = np.asarray(xdata, dtype=float)
    y = np.asarray(ydata, dtype=float)
    if x.shape != y.shape:
        raise UsageError("x and y lengths differ")
    w = np.ones_like(y) if yerr is None else 1.0 / np.asarray(yerr, dtype=float)
    if yerr is not None and np.asarray(yerr).shape != y.shape:
        raise UsageError("yerr length differs from data")

    fixed = dict(fixed or {})
    for name in fixed:
        if name not in model.param_names:
            raise UsageError(f"cannot fix unknown parameter {name!r}")
    free_names = tuple(n for n in model.param_names if n not in fixed)
    if not free_names:
        raise UsageError("no free parameters")
    p0_map = dict(zip(model.param_names, np.asarray(p0, dtype=float))) if not isinstance(p0, dict) else dict(p0)
    p_free0 = np.array([p0_map[n] for n in free_names], dtype=float)

    def full(p_free):
        vals = dict(zip(free_names, p_free))
        vals.update(fixed)
        return [vals[n] for n in model.param_names]

    def residuals(p_free):
        return (model(x, *full(p_free)) - y) * w

    if method == "simplex":
        res = minimize(
            lambda p: float(np.sum(residuals(p) ** 2)),
            p_free0,
            method="Nelder-Mead",
            options={"maxiter": max_nfev, "xatol": 1e-10, "fatol": 1e-14},
        )
        p_opt = res.x
        converged = bool(res.success)
        status = "converged" if converged else "max-iterations"
        n_eval = int(res.nfev)
    else:
        bounds = (-np.inf, np.inf)
        ls_method = "lm"
        if model.bounds is not None:
            free_idx = [model.param_names.index(n) for n in free_names]
            bounds = (np.asarray(model.bounds[0])[free_idx], np.asarray(model.bounds[1])[free_idx])
            ls_method = "trf"
        # scale each direction by the guess magnitude: parameters here span
        # orders of magnitude (GHz splittings against sub-ns^-1 rates)
        x_scale = np.where(np.abs(p_free0) > 0, np.abs(p_free0), 1.0)
        try:
            res = least_squares(residuals, p_free0, method=ls_method, bounds=bounds,
                                max_nfev=max_nfev, diff_step=1e-6, x_scale=x_scale,
                                xtol=1e-11, ftol=1e-11, gtol=1e-11)
        except ValueError as exc:
            raise UsageError(f"least-squares setup failed: {exc}") from exc
        p_opt = res.x
        converged = res.status > 0
        status = "converged" if converged else "max-iterations"
        n_eval = int(res.nfev)

    r = residuals(p_opt)
    jac = _numeric_jacobian(residuals, p_opt)
    stderr, cov, unident = _errors_from_jacobian(jac, r, len(free_names))
    if unident:
        status = "rank-deficient"
    return FitResult(
        model=model.name,
        param_names=free_names,
        params=np.asarray(p_opt, dtype=float),
        stderr=stderr,
        covariance=cov,
        residual_norm=float(np.sqrt(np.sum(r * r))),
        converged=converged,
        status=status,
        n_eval=n_eval,
        unidentifiable=tuple(free_names[i] for i in unident),
        fixed=fixed,
    )


def _numeric_jacobian(residuals, p, rel_step=1e-6, abs_step=1e-9) -> np.ndarray:
    r0 = residuals(p)
    jac = np.empty((r0.size, p.size))
    for k in range(p.size):
        h = max(rel_step * abs(p[k]), abs_step)
        pk = np.array(p, dtype=float)
        pk[k] += h
        jac[:, k] = (residuals(pk) - r0) / h
    return jac


def _errors_from_jacobian(jac: np.ndarray, r: np.ndarray, n_free: int):
    dof = max(r.size - n_free, 1)
    s2 = float(np.sum(r * r)) / dof
    u, sv, vt = np.linalg.svd(jac, full_matrices=False)
    unident = []
    if sv.size and sv[0] > 0:
        small = sv < _RANK_TOL * sv[0]
        if np.any(small):
            for col in np.where(small)[0]:
                unident.append(int(np.argmax(np.abs(vt[col]))))
    else:
        unident = list(range(n_free))
    sv_inv = np.where(sv > (_RANK_TOL * sv[0] if sv.size and sv[0] > 0 else 1.0), 1.0 / sv, 0.0)
    cov = (vt.T * sv_inv**2) @ vt * s2
    stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    for k in unident:
        stderr[k] = np.inf
    return stderr, cov, sorted(set(unident))


# --- model library ----------------------------------------------------------------

def _linear(x, slope, intercept):
    return slope * x + intercept


def _exp_decay(x, amplitude, tau, offset):
    return amplitude * np.exp(-x / tau) + offset


def _saturation(p, r_inf, p_sat):
    return r_inf * (p / p_sat) / (1.0 + p / p_sat)


def _gaussian_peak(x, amplitude, center, fwhm, offset):
    sigma = fwhm / FWHM_PER_SIGMA
    return amplitude * np.exp(-0.5 * ((x - center) / sigma) ** 2) + offset


def _damped_ramsey(tau, amplitude, delta_mhz, phase, t2star_ns):
    return amplitude * np.sin(2e-3 * np.pi * delta_mhz * tau + phase) * np.exp(-((tau / t2star_ns) ** 2))


def _echo_envelope(big_t, amplitude, t2he_ns):
    return amplitude * np.exp(-((big_t / t2he_ns) ** 2))


def _serrodyne_ramsey(tau, amplitude, freq_mhz, t2star_ns):
    return amplitude * np.sin(2e-3 * np.pi * freq_mhz * tau) * np.exp(-((tau / t2star_ns) ** 2))


def lorentzian_multi(n_peaks: int = 1) -> FitModel:
    """Sum of Lorentzians on a common offset; parameters are
    (offset, amp_i, center_i, fwhm_i) per peak."""
    if n_peaks < 1:
        raise UsageError("need at least one peak")
    names = ["offset"]
    for i in range(1, n_peaks + 1):
        names += [f"amp{i}", f"center{i}", f"fwhm{i}"]

    def func(x, *params):
        out = np.full_like(x, params[0], dtype=float)
        for i in range(n_peaks):
            amp, center, fwhm = params[1 + 3 * i: 4 + 3 * i]
            out = out + amp / (1.0 + ((x - center) / (fwhm / 2.0)) ** 2)
        return out

    return FitModel(name=f"lorentzian_multi[{n_peaks}]", param_names=tuple(names), func=func)


def _bounds(names: tuple[str, ...], positive: tuple[str, ...]) -> tuple:
    lo = np.array([1e-12 if n in positive else -np.inf for n in names])
    hi = np.full(len(names), np.inf)
    return lo, hi


_DECAY_NAMES = ("amplitude", "tau", "offset")
_RAMSEY_NAMES = ("amplitude", "delta_mhz", "phase", "t2star_ns")
_SERR_NAMES = ("amplitude", "freq_mhz", "t2star_ns")
_ECHO_NAMES = ("amplitude", "t2he_ns")
_GAUSS_NAMES = ("amplitude", "center", "fwhm", "offset")
_SAT_NAMES = ("r_inf", "p_sat")

MODEL_LIBRARY: dict[str, FitModel] = {
    "linear": FitModel("linear", ("slope", "intercept"), _linear),
    "exp_decay": FitModel("exp_decay", _DECAY_NAMES, _exp_decay,
                          bounds=_bounds(_DECAY_NAMES, ("tau",))),
    "saturation": FitModel("saturation", _SAT_NAMES, _saturation,
                           bounds=_bounds(_SAT_NAMES, ("p_sat",))),
    "gaussian_peak": FitModel("gaussian_peak", _GAUSS_NAMES, _gaussian_peak,
                              bounds=_bounds(_GAUSS_NAMES, ("fwhm",))),
    "damped_ramsey": FitModel("damped_ramsey", _RAMSEY_NAMES, _damped_ramsey,
                              bounds=_bounds(_RAMSEY_NAMES, ("t2star_ns",))),
    "echo_envelope": FitModel("echo_envelope", _ECHO_NAMES, _echo_envelope,
                              bounds=_bounds(_ECHO_NAMES, ("t2he_ns",))),
    "serrodyne_ramsey": FitModel("serrodyne_ramsey", _SERR_NAMES, _serrodyne_ramsey,
                                 bounds=_bounds(_SERR_NAMES, ("t2star_ns",))),
    "lorentzian_multi": lorentzian_multi(1),
}


def get_model(name: str) -> FitModel:
    try:
        return MODEL_LIBRARY[name]
    except KeyError:
        raise UsageError(f"unknown model {name!r}; have {sorted(MODEL_LIBRARY)}") from None


# --- master-equation Rabi fit -------------------------------------------------------

def fit_rabi_master_equation(
    tau_ns,
    counts,
    omega0_mhz: float,
    gamma2_0_mhz: float,
    t2star_ns: float,
    gamma1_mhz: float,
    delta_mhz: float = 0.0,
    nodes: int = 11,
) -> tuple[FitResult, "models.PiContrast"]:
    """Fit a measured Rabi trace with the ensemble-averaged two-level model.

    T2* and Gamma1 enter as fixed priors; free parameters are (Omega, Gamma2)
    with the counts scale and offset solved linearly at every evaluation
    (variable projection).  Returns the fit plus the pi contrast and quality
    factor of the noiseless readout model at the optimum.
    """
    from . import models
    from .ensemble import ensemble_average
    from .core import DensityMatrix, evolve
    from .sequences import _avg_population_batched

    tau = np.asarray(tau_ns, dtype=float)
    y = np.asarray(counts, dtype=float)
    sigma = gaussian_sigma(t2star_ns)
    grid = tau if tau[0] == 0.0 else np.concatenate([[0.0], tau])
    skip = 0 if tau[0] == 0.0 else 1
    rho0 = DensityMatrix.pure(2, 1)

    def shape(omega_mhz: float, gamma2_mhz: float) -> np.ndarray:
        # |.| keeps the simplex walk inside the physical domain
        def make(offset):
            return models.build_two_level(abs(omega_mhz), delta_mhz + offset,
                                          gamma1_mhz, abs(gamma2_mhz))
        return _avg_population_batched(make, sigma, nodes, grid, skip, rho0)

    def projected(p):
        s = shape(p[0], p[1])
        basis = np.stack([s, np.ones_like(s)], axis=1)
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        return s, coef

    def residuals(p):
        s, coef = projected(p)
        return s * coef[0] + coef[1] - y

    res = minimize(
        lambda p: float(np.sum(residuals(p) ** 2)),
        np.array([omega0_mhz, gamma2_0_mhz]),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 400},
    )
    omega_fit, gamma2_fit = abs(res.x[0]), abs(res.x[1])
    s, coef = projected(res.x)
    p_full = np.array([omega_fit, gamma2_fit, coef[0], coef[1]])

    def residuals_full(p):
        return shape(p[0], p[1]) * p[2] + p[3] - y

    r = residuals_full(p_full)
    jac = _numeric_jacobian(residuals_full, p_full)
    stderr, cov, unident = _errors_from_jacobian(jac, r, 4)
    names = ("omega_mhz", "gamma2_mhz", "scale", "offset")
    result = FitResult(
        model="rabi_master_equation",
        param_names=names,
        params=p_full,
        stderr=stderr,
        covariance=cov,
        residual_norm=float(np.sqrt(np.sum(r * r))),
        converged=bool(res.success),
        status="converged" if res.success else "max-iterations",
        n_eval=int(res.nfev),
        unidentifiable=tuple(names[i] for i in unident),
    )
    # evaluate the noiseless readout model exactly at the pi time
    t_pi = 1e3 / (2 * omega_fit)

    def pi_population(offset):
        model = models.build_two_level(omega_fit, delta_mhz + offset,
                                       gamma1_mhz, gamma2_fit)
        traj = evolve(model, DensityMatrix.pure(2, 1), np.array([0.0, t_pi]))
        return traj.population(0)[-1]

    f_pi = float(ensemble_average(pi_population, sigma, nodes))
    return result, models.pi_contrast_and_q(f_pi)


# --- spectra and tabulated frequencies ----------------------------------------------

class NuclearSpecies(NamedTuple):
    """A nuclear species and its gyromagnetic ratio gamma/2pi in MHz/T."""

    name: str
    gyromagnetic_mhz_per_t: float


NUCLEAR_SPECIES: tuple[NuclearSpecies, ...] = tuple(
    NuclearSpecies(name, ratio) for name, ratio in GYROMAGNETIC_MHZ_PER_T.items()
)


@dataclass(frozen=True)
class FftSpectrum:
    freq_mhz: np.ndarray
    amplitude: np.ndarray
    peaks: tuple[tuple[float, float], ...]  # (frequency MHz, amplitude)


def fft_spectrum(times_ns, values, prominence: float | None = None) -> FftSpectrum:
    """Hann-windowed magnitude spectrum of a uniformly sampled trace.

    Peak frequencies are refined by quadratic interpolation around the
    discrete maxima; only peaks with prominence above the threshold (default:
    four times the median magnitude) are reported.
    """
    t = np.asarray(times_ns, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 32:
        raise UsageError("need at least 32 samples")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(abs(dt[0]), 1e-12):
        raise UsageError("time grid must be uniform")
    y = y - y.mean()
    window = np.hanning(y.size)
    amp = np.abs(np.fft.rfft(y * window))
    freq = np.fft.rfftfreq(y.size, d=dt[0]) * 1e3

    from scipy.signal import find_peaks

    if prominence is None:
        prominence = 4.0 * float(np.median(amp))
    idx, _ = find_peaks(amp, prominence=prominence)
    peaks = []
    for k in idx:
        f = freq[k]
        if 0 < k < amp.size - 1:
            denom = amp[k - 1] - 2 * amp[k] + amp[k + 1]
            if denom < 0:
                f = f + 0.5 * (freq[1] - freq[0]) * (amp[k - 1] - amp[k + 1]) / denom
        peaks.append((float(f), float(amp[k])))
    peaks.sort(key=lambda p: -p[1])
    return FftSpectrum(freq_mhz=freq, amplitude=amp, peaks=tuple(peaks))


def larmor_frequencies(b_tesla: float, species: Sequence[str] = ("75As", "69Ga", "71Ga")) -> dict[str, float]:
    """Nuclear Larmor frequencies gamma_n * B in MHz per species."""
    if b_tesla <= 0:
        raise DomainError("magnetic field must be > 0")
    known = {sp.name: sp for sp in NUCLEAR_SPECIES}
    out = {}
    for name in species:
        if name not in known:
            raise UsageError(f"unknown species {name!r}; have {sorted(known)}")
        out[name] = known[name].gyromagnetic_mhz_per_t * b_tesla
    return out


def t2star_from_linewidth(fwhm_mhz: float) -> float:
    """Gaussian ESR full width at half maximum (MHz) -> T2* (ns)."""
    if fwhm_mhz <= 0:
        raise UsageError("linewidth must be > 0")
    sigma = fwhm_mhz / FWHM_PER_SIGMA
    return math.sqrt(2.0) * 1e3 / (2.0 * math.pi * sigma)


def linewidth_from_t2star(t2star_ns: float) -> float:
    """Inverse of :func:`t2star_from_linewidth`."""
    return FWHM_PER_SIGMA * gaussian_sigma(t2star_ns)


# --- data file interface --------------------------------------------------------------

def read_data_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read an (x, y[, yerr]) CSV with a mandatory one-line header.

    Lines starting with '#' are comments/metadata.  Malformed rows raise
    :class:`DataError` carrying the row number.
    """
    xs, ys, es = [], [], []
    header_seen = False
    n_cols = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                header_seen = True  # header row: names, not parsed
                n_cols = len(line.split(","))
                if n_cols not in (2, 3):
                    raise DataError(f"expected 2 or 3 columns, header has {n_cols}", row=lineno)
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != n_cols:
                raise DataError(f"expected {n_cols} fields, got {len(parts)}", row=lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise DataError(f"non-numeric field: {exc}", row=lineno) from None
            xs.append(vals[0])
            ys.append(vals[1])
            if n_cols == 3:
                es.append(vals[2])
    if not header_seen:
        raise DataError("file has no header row")
    if not xs:
        raise DataError("file has no data rows")
    yerr = np.asarray(es) if es else None
    return np.asarray(xs), np.asarray(ys), yerr


def fit_result_text(result: FitResult) -> str:
    """Flat parameter/value/stderr record, one line per parameter."""
    lines = [f"model = {result.model}", f"status = {result.status}"]
    for name in result.param_names:
        lines.append(f"{name} = {result[name]:.10g} +- {result.error(name):.4g}")
    for name, value in result.fixed.items():
        lines.append(f"{name} = {value:.10g} (fixed)")
    lines.append(f"residual_norm = {result.residual_norm:.6g}")
    if result.unidentifiable:
        lines.append(f"unidentifiable = {', '.join(result.unidentifiable)}")
    return "\n".join(lines) + "\n"


def fit_result_json(result: FitResult) -> str:
    return json.dumps(result.as_dict(), indent=2, sort_keys=True) + "\n"
