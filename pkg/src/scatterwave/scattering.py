"""1-D wavelet scattering transform up to second order.

Filters live in the frequency domain on a grid of ``N = next_pow2(signal_len)``
points, frequencies in cycles/sample.  Signals are reflect-padded to ``N``,
all convolutions are periodic on that grid, and outputs are cropped back to
the signal support before the final subsampling by ``2**J``.

First-order wavelets sit on a geometric grid ``xi1 * 2**(-j/Q)`` for
``j = 0 .. J*Q - 1``, second-order ones on ``xi2 * 2**(-j/Q2)`` for
``j = 0 .. J*Q2 - 1``.  Each bank is scaled so that, together with the
Gaussian low-pass, its Littlewood-Paley sum for real inputs never exceeds
one.  That makes every layer, and therefore the whole transform,
non-expansive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .dsp import median_normalize
from .errors import DegenerateInputError, InputError, ParameterError
from .features import BandAxis, FeatureImage

# Adjacent wavelets cross where |psi_hat|**2 equals this fraction of the peak.
# Higher values flatten the Littlewood-Paley sum at the cost of selectivity.
LP_CROSSING = 0.8


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def xi_max(Q: int) -> float:
    """Center frequency of the highest wavelet in a bank with Q per octave.

    Chosen so the upper neighbour of the top wavelet would sit at the
    Nyquist frequency, which keeps the bank covering the top of the band.
    """
    return max(1.0 / (1.0 + 2.0 ** (1.0 / Q)), 0.35)


def morlet_sigma(xi: float, Q: int, crossing: float = LP_CROSSING) -> float:
    """Frequency-domain width giving the requested crossing between neighbours."""
    f = 2.0 ** (-1.0 / Q)
    gap = xi * (1.0 - f) / (1.0 + f)
    return gap / math.sqrt(-math.log(crossing))


def morlet_hat(omega: np.ndarray, xi: float, sigma: float, periods: int = 2) -> np.ndarray:
    """Periodized Morlet in frequency with the DC response cancelled exactly."""
    bump = np.zeros_like(omega)
    env = np.zeros_like(omega)
    bump0 = env0 = 0.0
    for k in range(-periods, periods + 1):
        bump += np.exp(-((omega + k - xi) ** 2) / (2 * sigma**2))
        env += np.exp(-((omega + k) ** 2) / (2 * sigma**2))
        bump0 += math.exp(-((k - xi) ** 2) / (2 * sigma**2))
        env0 += math.exp(-(k**2) / (2 * sigma**2))
    beta = bump0 / env0
    return bump - beta * env


def gaussian_lowpass_hat(omega: np.ndarray, J: int, sigma_phi: float) -> np.ndarray:
    """Fourier transform of ``2**-J phi(2**-J t)`` with phi ~ N(0, sigma_phi**2)."""
    sigma_t = sigma_phi * 2.0**J
    return np.exp(-0.5 * (2 * np.pi * sigma_t * omega) ** 2)


@dataclass(frozen=True)
class ScatteringConfig:
    J: int
    Q: int
    signal_len: int
    Q2: int = 1
    sigma_phi: float = 0.7

    def __post_init__(self):
        for name in ("J", "Q", "Q2", "signal_len"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v}")
        if 2**self.J > self.signal_len:
            raise ParameterError(f"2**J = {2 ** self.J} exceeds signal length {self.signal_len}")
        if not self.sigma_phi > 0:
            raise ParameterError("sigma_phi must be positive")

    @property
    def n_frames(self) -> int:
        return -(-self.signal_len // 2**self.J)


@dataclass(frozen=True)
class ScatteringFilterBank:
    config: ScatteringConfig
    psi1: list  # [(j1, complex array [N])]
    psi2: list  # [(j2, complex array [N])]
    phi: np.ndarray
    xi1: np.ndarray  # center frequencies (cycles/sample)
    xi2: np.ndarray
    pairs: list = field(default_factory=list)  # admissible (j1, j2), sorted

    @property
    def pad_len(self) -> int:
        return self.phi.size

    @property
    def psi1_matrix(self) -> np.ndarray:
        return np.stack([h for _, h in self.psi1])

    def littlewood_paley(self, order: int = 1) -> np.ndarray:
        """``|phi|^2 + 1/2 sum |psi(w)|^2 + |psi(-w)|^2`` on the FFT grid."""
        bank = self.psi1 if order == 1 else self.psi2
        p = np.sum([np.abs(h) ** 2 for _, h in bank], axis=0)
        mirrored = np.roll(p[::-1], 1)
        return np.abs(self.phi) ** 2 + 0.5 * (p + mirrored)


def _wavelet_grid(omega, Q, J):
    xi0 = xi_max(Q)
    js = np.arange(J * Q)
    xis = xi0 * 2.0 ** (-js / Q)
    hats = [morlet_hat(omega, xi, morlet_sigma(xi, Q)) for xi in xis]
    return js, xis, hats


def _normalize_bank(hats, phi_hat):
    """Scale the bank so the real-input Littlewood-Paley sum stays <= 1."""
    p = np.sum([np.abs(h) ** 2 for h in hats], axis=0)
    lp = 0.5 * (p + np.roll(p[::-1], 1))
    room = 1.0 - np.abs(phi_hat) ** 2
    mask = lp > 1e-9 * lp.max()
    scale = math.sqrt(float(np.min(room[mask] / lp[mask])))
    return [h * scale for h in hats]


def build_scattering_bank(cfg: ScatteringConfig) -> ScatteringFilterBank:
    n = next_pow2(cfg.signal_len)
    omega = np.fft.fftfreq(n)
    phi = gaussian_lowpass_hat(omega, cfg.J, cfg.sigma_phi)

    j1s, xi1, hats1 = _wavelet_grid(omega, cfg.Q, cfg.J)
    j2s, xi2, hats2 = _wavelet_grid(omega, cfg.Q2, cfg.J)
    hats1 = _normalize_bank(hats1, phi)
    hats2 = _normalize_bank(hats2, phi)
    for h in hats1 + hats2 + [phi]:
        h.setflags(write=False)

    pairs = [(int(a), int(b)) for a in j1s for b in j2s if xi2[b] < xi1[a]]
    return ScatteringFilterBank(
        config=cfg,
        psi1=list(zip(j1s.tolist(), hats1)),
        psi2=list(zip(j2s.tolist(), hats2)),
        phi=phi,
        xi1=xi1,
        xi2=xi2,
        pairs=pairs,
    )


def path_count(cfg: ScatteringConfig) -> tuple[int, int]:
    """Number of first- and second-order paths for ``cfg``."""
    xi1 = xi_max(cfg.Q) * 2.0 ** (-np.arange(cfg.J * cfg.Q) / cfg.Q)
    xi2 = xi_max(cfg.Q2) * 2.0 ** (-np.arange(cfg.J * cfg.Q2) / cfg.Q2)
    p2 = int(np.sum(xi2[None, :] < xi1[:, None]))
    return cfg.J * cfg.Q, p2


@dataclass
class ScatteringOutput:
    order0: FeatureImage
    order1: FeatureImage
    order2: FeatureImage
    paths1: list
    paths2: list

    def rows(self) -> np.ndarray:
        """All paths stacked: order 0, then order 1, then order 2."""
        return np.vstack([self.order0.data, self.order1.data, self.order2.data])


@dataclass
class _Cascade:
    s0: np.ndarray  # [N]
    s1: np.ndarray  # [P1, N]
    s2: np.ndarray  # [P2, N]
    u2_energy: np.ndarray  # [P2] energy of the second-order envelopes


def _lowpass(spec_rows: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return scipy.fft.ifft(spec_rows * phi, axis=-1).real


def _cascade(x: np.ndarray, bank: ScatteringFilterBank) -> _Cascade:
    cfg = bank.config
    n = bank.pad_len
    left = (n - cfg.signal_len) // 2
    xp = np.pad(x, (left, n - cfg.signal_len - left), mode="reflect") if n > cfg.signal_len else x
    crop = slice(left, left + cfg.signal_len)

    X = scipy.fft.fft(xp)
    s0 = _lowpass(X, bank.phi)[crop]

    u1 = np.abs(scipy.fft.ifft(X[None, :] * bank.psi1_matrix, axis=-1))
    U1 = scipy.fft.fft(u1, axis=-1)
    s1 = _lowpass(U1, bank.phi)[:, crop]

    s2 = np.empty((len(bank.pairs), cfg.signal_len))
    u2_energy = np.empty(len(bank.pairs))
    by_j2: dict[int, list[int]] = {}
    for k, (j1, j2) in enumerate(bank.pairs):
        by_j2.setdefault(j2, []).append(k)
    psi2 = dict(bank.psi2)
    for j2, ks in by_j2.items():
        j1s = [bank.pairs[k][0] for k in ks]
        u2 = np.abs(scipy.fft.ifft(U1[j1s] * psi2[j2], axis=-1))
        s2[ks] = _lowpass(scipy.fft.fft(u2, axis=-1), bank.phi)[:, crop]
        u2_energy[ks] = np.sum(u2[:, crop] ** 2, axis=-1)
    return _Cascade(s0, s1, s2, u2_energy)


def scatter(x, bank: ScatteringFilterBank) -> ScatteringOutput:
    cfg = bank.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != cfg.signal_len:
        raise InputError(f"expected a 1-D signal of length {cfg.signal_len}, got shape {x.shape}")
    c = _cascade(x, bank)
    step = 2**cfg.J
    dt = float(step)

    def img(a):
        a = np.maximum(np.atleast_2d(a)[:, ::step], 0.0)
        return FeatureImage(a, BandAxis.SCATTERING_PATHS, time_step_s=dt)

    paths1 = [j for j, _ in bank.psi1]
    # order 0 keeps its magnitude only, so the whole output is sign-invariant
    out = ScatteringOutput(img(np.abs(c.s0)), img(c.s1), img(c.s2), paths1, list(bank.pairs))
    out.order1.band_labels = list(paths1)
    out.order2.band_labels = list(bank.pairs)
    return out


def scatter_features(x, bank: ScatteringFilterBank) -> tuple[FeatureImage, FeatureImage]:
    """Median-normalized order-1 and order-2 images; order 0 is dropped."""
    out = scatter(x, bank)
    return median_normalize(out.order1), median_normalize(out.order2)


def scattering_norm(out: ScatteringOutput) -> float:
    """Sum over all paths of the L2 norm of each path's time series."""
    return float(np.sum(np.linalg.norm(out.rows(), axis=1)))


def stacked_distance(a: ScatteringOutput, b: ScatteringOutput) -> float:
    """L2 distance between the stacked coefficient vectors of two outputs."""
    return float(np.linalg.norm(a.rows() - b.rows()))


@dataclass(frozen=True)
class LayerEnergy:
    e0: float
    e1: float
    e2: float
    residual: float  # envelope energy left in order-2 paths after low-pass
    signal: float

    @property
    def captured(self) -> float:
        return (self.e0 + self.e1 + self.e2) / self.signal


def layer_energy(x, bank: ScatteringFilterBank) -> LayerEnergy:
    """Energy carried by each scattering order, measured at full resolution."""
    x = np.asarray(x, dtype=np.float64)
    if x.size != bank.config.signal_len:
        raise InputError(f"expected length {bank.config.signal_len}, got {x.size}")
    total = float(np.sum(x**2))
    if total == 0.0:
        raise DegenerateInputError("signal has zero energy")
    c = _cascade(x, bank)
    e2_paths = np.sum(c.s2**2, axis=-1)
    return LayerEnergy(
        e0=float(np.sum(c.s0**2)),
        e1=float(np.sum(c.s1**2)),
        e2=float(np.sum(e2_paths)),
        residual=float(np.sum(c.u2_energy - e2_paths)),
        signal=total,
    )


def paths_header(bank: ScatteringFilterBank) -> str:
    """Text listing of paths: one ``j1`` line per first-order path, then ``j1,j2`` lines."""
    lines = [str(j) for j, _ in bank.psi1]
    lines += [f"{a},{b}" for a, b in bank.pairs]
    return "\n".join(lines) + "\n"
