"""Temporal wave-packet design and overlap scoring.

Optimal excitation of a two-level system with decay rate Gamma = 1/tau
wants the time reverse of its spontaneous decay: a rising exponential

    E_ideal(t) = exp(Gamma*t/2) * heaviside(-t),

truncated sharply at t = 0. A candidate field envelope E_inc is scored by
the temporal overlap

    eta_t = max_s int E_inc(t - s) E_ideal(t) dt / sqrt(int E_inc^2 dt / Gamma),

the time shift s chosen to maximize the projection. The normalization uses
int E_ideal^2 dt = 1/Gamma, so eta_t <= 1 with equality only for the exact
rising exponential.

Envelopes are sampled at bin centers (midpoint rule); the projection
evaluates the ideal envelope's integral over each bin analytically, which
keeps the sharp t=0 cutoff from biasing the discretization.

Pulse shaping uses an acousto-optic modulator driven by an RF signal with
envelope U0(t) = arcsin(exp(t/(2*tau))), so that the diffracted intensity
sin^2(U0) follows exp(t/tau) exactly. The finite build-up/decay of the
optical grating in the modulator is modeled as a first-order low-pass on
the field envelope (time constant = build-up time); the model is a design
choice and deliberately simple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.constants import c as _c_light
from scipy.constants import h as _h_planck

from .errors import DomainError, UndefinedOverlapError

__all__ = [
    "TransitionSpec",
    "T1",
    "T2",
    "PulseEnvelope",
    "AomModel",
    "ideal_envelope",
    "temporal_overlap",
    "TemporalOverlapResult",
    "aom_drive",
    "DriveWaveform",
    "aom_response",
    "histogram_to_envelope",
    "load_histogram",
    "mean_photons",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TransitionSpec:
    """An atomic dipole transition: label, wavelength, lifetime."""

    label: str
    wavelength_nm: float
    lifetime_ns: float

    def __post_init__(self):
        if self.lifetime_ns <= 0:
            raise DomainError(f"lifetime must be positive, got {self.lifetime_ns}")
        if self.wavelength_nm <= 0:
            raise DomainError(f"wavelength must be positive, got {self.wavelength_nm}")

    @property
    def gamma(self) -> float:
        """Decay rate in 1/ns."""
        return 1.0 / self.lifetime_ns


T1 = TransitionSpec("T1", 369.5, 8.1)
T2 = TransitionSpec("T2", 251.8, 230.0)


@dataclass(frozen=True)
class PulseEnvelope:
    """Sampled field envelope on uniform bins.

    samples[i] is the field amplitude at the center of bin i; t_end is the
    center time of the last bin, measured relative to the intended
    truncation edge t = 0 of the ideal envelope.
    """

    samples: np.ndarray
    bin_width_ns: float
    t_end_ns: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if self.bin_width_ns <= 0:
            raise DomainError(f"bin width must be positive, got {self.bin_width_ns}")
        if samples.ndim != 1 or samples.size < 2:
            raise DomainError("envelope needs at least two samples")
        if not np.all(np.isfinite(samples)) or np.any(samples < 0):
            raise DomainError("envelope amplitudes must be finite and non-negative")

    def times(self) -> np.ndarray:
        """Bin-center times in ns."""
        n = self.samples.size
        return self.t_end_ns - self.bin_width_ns * np.arange(n - 1, -1, -1)

    def energy(self) -> float:
        """Integral of the squared envelope (amplitude^2 * ns)."""
        return float(np.sum(self.samples**2) * self.bin_width_ns)

    def shifted(self, delta_ns: float) -> "PulseEnvelope":
        return PulseEnvelope(self.samples, self.bin_width_ns, self.t_end_ns + delta_ns)


def ideal_envelope(spec: TransitionSpec, duration_ns: float, bin_width_ns: float) -> PulseEnvelope:
    """Rising exponential exp(Gamma*t/2) sampled on [-duration, 0]."""
    if duration_ns <= 0:
        raise DomainError(f"duration must be positive, got {duration_ns}")
    n = max(int(round(duration_ns / bin_width_ns)), 2)
    t_end = -0.5 * bin_width_ns
    t = t_end - bin_width_ns * np.arange(n - 1, -1, -1)
    return PulseEnvelope(np.exp(spec.gamma * t / 2.0), bin_width_ns, t_end)


def _ideal_bin_integrals(lo: np.ndarray, hi: np.ndarray, gamma: float) -> np.ndarray:
    # integral of exp(gamma*t/2)*heaviside(-t) over [lo, hi], elementwise
    hi0 = np.minimum(hi, 0.0)
    lo0 = np.minimum(lo, 0.0)
    return (2.0 / gamma) * (np.exp(gamma * hi0 / 2.0) - np.exp(gamma * lo0 / 2.0))


@dataclass(frozen=True)
class TemporalOverlapResult:
    eta_t: float
    shift_ns: float


def temporal_overlap(
    pulse: PulseEnvelope,
    spec: TransitionSpec,
    shift_lifetimes: float = 10.0,
) -> TemporalOverlapResult:
    """Temporal overlap of a pulse with the ideal rising exponential.

    The incident envelope is displaced by a shift s (E_inc(t - s) against
    the fixed ideal envelope) chosen to maximize the projection; the search
    scans +-shift_lifetimes*tau coarsely and refines with golden section.

    Returns the overlap and the maximizing shift. Raises
    UndefinedOverlapError for a zero-energy pulse.
    """
    energy = pulse.energy()
    if energy <= 0.0:
        raise UndefinedOverlapError("zero-energy pulse")
    gamma = spec.gamma
    tau = spec.lifetime_ns
    t = pulse.times()
    half = 0.5 * pulse.bin_width_ns
    norm = math.sqrt(energy / gamma)
    e = pulse.samples

    def project(s: float) -> float:
        lo = t + s - half
        hi = t + s + half
        return float(np.dot(e, _ideal_bin_integrals(lo, hi, gamma))) / norm

    span = shift_lifetimes * tau
    scan = np.linspace(-span, span, 801)
    vals = np.array([project(s) for s in scan])
    k = int(np.argmax(vals))
    a = scan[max(k - 1, 0)]
    b = scan[min(k + 1, len(scan) - 1)]

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = project(c), project(d)
    while abs(b - a) > 1e-10 * tau:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = project(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = project(d)
    s = 0.5 * (a + b)
    return TemporalOverlapResult(eta_t=project(s), shift_ns=s)


@dataclass(frozen=True)
class AomModel:
    """Acousto-optic modulator response parameters.

    rf_frequency_hz is the carrier frequency of the RF drive; it is not used
    by the envelope model and is carried for reporting and export only.
    """

    rf_frequency_hz: float = 400e6
    buildup_time_ns: float = 5.0

    def __post_init__(self):
        if self.buildup_time_ns < 0:
            raise DomainError(f"buildup time must be >= 0, got {self.buildup_time_ns}")


@dataclass(frozen=True)
class DriveWaveform:
    """RF drive envelope U0(t) in radians, sampled at bin centers."""

    times_ns: np.ndarray
    u0_rad: np.ndarray
    bin_width_ns: float

    def save(self, path):
        lines = ["# AOM drive envelope: t_ns U0_rad"]
        lines += [f"{t:.9e} {u:.9e}" for t, u in zip(self.times_ns, self.u0_rad)]
        Path(path).write_text("\n".join(lines) + "\n")

    def field_envelope(self) -> PulseEnvelope:
        """Field envelope implied by the drive: sin(U0), so intensity sin^2(U0)."""
        return PulseEnvelope(np.sin(self.u0_rad), self.bin_width_ns, float(self.times_ns[-1]))


def aom_drive(spec: TransitionSpec, duration_ns: float, bin_width_ns: float) -> DriveWaveform:
    """Drive envelope U0(t) = arcsin(exp(t/(2*tau))) on [-duration, 0].

    sin^2(U0(t)) = exp(t/tau) recovers the target intensity exactly;
    U0(0-) = pi/2. Evaluation beyond t = 0 is a domain error (the arcsin
    argument would exceed 1).
    """
    if duration_ns <= 0:
        raise DomainError(f"duration must be positive, got {duration_ns}")
    n = max(int(round(duration_ns / bin_width_ns)), 2)
    t_end = -0.5 * bin_width_ns
    t = t_end - bin_width_ns * np.arange(n - 1, -1, -1)
    if np.any(t > 0):
        raise DomainError("drive is only defined for t <= 0")
    u0 = np.arcsin(np.exp(t / (2.0 * spec.lifetime_ns)))
    return DriveWaveform(times_ns=t, u0_rad=u0, bin_width_ns=bin_width_ns)


def aom_response(envelope: PulseEnvelope, model: AomModel, tail_buildups: float = 5.0) -> PulseEnvelope:
    """First-order low-pass response of the modulator to a field envelope.

    Applies y' = (x - y)/tau_b with tau_b = buildup_time to the input
    envelope (exact zero-order-hold update per bin) and extends the time
    axis past the input by tail_buildups*tau_b to capture the smeared
    falling edge. buildup_time = 0 returns the input unchanged.
    """
    if model.buildup_time_ns == 0.0:
        return envelope
    dt = envelope.bin_width_ns
    n_tail = int(math.ceil(tail_buildups * model.buildup_time_ns / dt))
    x = np.concatenate([envelope.samples, np.zeros(n_tail)])
    decay = math.exp(-dt / model.buildup_time_ns)
    y = np.empty_like(x)
    acc = 0.0
    for i, xi in enumerate(x):
        acc = acc * decay + xi * (1.0 - decay)
        y[i] = acc
    return PulseEnvelope(y, dt, envelope.t_end_ns + n_tail * dt)


def histogram_to_envelope(counts, bin_width_ns: float, reverse: bool = False,
                          t_end_ns: float = 0.0) -> PulseEnvelope:
    """Field envelope from a photon-count histogram: amplitude = sqrt(counts).

    With ``reverse`` the bin order is flipped, undoing a start-stop
    acquisition that records time backwards. Total counts are preserved as
    the sum of squared amplitudes. An all-zero histogram is accepted here
    and flagged downstream by temporal_overlap.
    """
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise DomainError("counts must be non-negative")
    if reverse:
        counts = counts[::-1]
    return PulseEnvelope(np.sqrt(counts), bin_width_ns, t_end_ns)


def load_histogram(path):
    """Read a two-column (bin_start_ns, counts) text file.

    Returns (counts, bin_width_ns). Bins must be uniform.
    """
    starts, counts = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DomainError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        starts.append(float(parts[0]))
        counts.append(float(parts[1]))
    if len(starts) < 2:
        raise DomainError(f"{path}: need at least two bins")
    widths = np.diff(starts)
    if np.any(np.abs(widths - widths[0]) > 1e-9 * abs(widths[0])):
        raise DomainError(f"{path}: bins are not uniform")
    return np.asarray(counts), float(widths[0])


def mean_photons(power_w: float, rep_rate_hz: float, wavelength_nm: float) -> float:
    """Mean photon number per pulse at given average power and rate."""
    if power_w < 0:
        raise DomainError(f"power must be >= 0, got {power_w}")
    if rep_rate_hz <= 0 or wavelength_nm <= 0:
        raise DomainError("rep rate and wavelength must be positive")
    photon_energy = _h_planck * _c_light / (wavelength_nm * 1e-9)
    return power_w / rep_rate_hz / photon_energy
