"""Quick oracle checks runnable from an installed package (``scatterwave selftest``).

Each check compares a library routine against an independent, slower
computation and prints one PASS/FAIL line.
"""

from __future__ import annotations

import numpy as np

from . import dsp, ensemble, nn
from .dataprep import Signal, align, standardize
from .scattering import ScatteringConfig, build_scattering_bank, scatter, stacked_distance


def _naive_dft_frames(x, window, n_fft, hop):
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    n = np.arange(n_fft)
    k = np.arange(n_fft // 2 + 1)[:, None]
    basis = np.exp(-2j * np.pi * k * n / n_fft)
    cols = []
    for t in range(len(x) // hop + 1):
        seg = xp[t * hop:t * hop + n_fft] * window
        cols.append(basis @ seg)
    return np.array(cols).T


def check_dft() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    x = rng.standard_normal(200)
    w = dsp.make_window(dsp.WindowSpec("hann", 64))
    got = dsp.stft(x, w, 64, 16).data
    ref = _naive_dft_frames(x, w, 64, 16)
    err = np.max(np.abs(got - ref)) / np.max(np.abs(ref))
    return err < 1e-9, f"relative error {err:.2e}"


def check_mel_bank() -> tuple[bool, str]:
    bank = dsp.build_mel_filter_bank(20, 256, 16000.0)
    edges = bank.center_freqs_hz
    freqs = np.arange(129) * 16000.0 / 256
    worst = 0.0
    for m in range(20):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        for i, f in enumerate(freqs):
            if lo <= f <= mid:
                v = (f - lo) / (mid - lo)
            elif mid < f <= hi:
                v = (hi - f) / (hi - mid)
            else:
                v = 0.0
            worst = max(worst, abs(bank.filters[m, i] - v))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def check_align_standardize() -> tuple[bool, str]:
    a = align(Signal([1, 2, 3, 4, 5], 1.0), 3).samples.tolist()
    b = align(Signal([1, 2, 3], 1.0), 5).samples.tolist()
    c = standardize(Signal([1, 2, 3], 1.0)).samples.tolist()
    ok = a == [2, 3, 4] and b == [0, 1, 2, 3, 0] and c == [-1, 0, 1]
    return ok, f"{a} {b} {c}"


def check_gradients() -> tuple[bool, str]:
    spec = nn.ResNetSpec(3, stem_channels=2, widths=(2, 3), blocks_per_stage=1)
    model = nn.ResNet(spec, seed=3, dtype=np.float64)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 1, 5, 4))
    y = np.array([0, 2, 1])
    model.store.zero_grad()
    _, d = nn.cross_entropy(model.forward(x, True), y)
    model.backward(d)
    worst = 0.0
    for name, v in model.store.values.items():
        flat = v.reshape(-1)
        g = model.store.grads[name].reshape(-1)
        for i in range(min(flat.size, 3)):
            orig = flat[i]
            flat[i] = orig + 1e-5
            lp, _ = nn.cross_entropy(model.forward(x, True), y)
            flat[i] = orig - 1e-5
            lm, _ = nn.cross_entropy(model.forward(x, True), y)
            flat[i] = orig
            num = (lp - lm) / 2e-5
            worst = max(worst, abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-8))
    return worst < 1e-4, f"max relative error {worst:.2e}"


def check_merge_algebra() -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    p12 = nn.softmax(rng.standard_normal((20, 6)))
    pm = nn.softmax(rng.standard_normal((20, 6)))
    ok = (np.array_equal(ensemble.merge_hard(p12, pm, 0.0), p12)
          and np.array_equal(ensemble.merge_hard(p12, pm, 1.0), pm)
          and np.array_equal(ensemble.merge_max(p12, pm), ensemble.merge_max(3.7 * p12, 3.7 * pm)))
    return ok, "endpoints and scaling"


def check_nonexpansive() -> tuple[bool, str]:
    bank = build_scattering_bank(ScatteringConfig(4, 4, 1024))
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(5):
        x, y = rng.standard_normal((2, 1024))
        worst = max(worst, stacked_distance(scatter(x, bank), scatter(y, bank)) / np.linalg.norm(x - y))
    return worst <= 1 + 1e-6, f"max ratio {worst:.3f}"


CHECKS = {
    "stft-vs-naive-dft": check_dft,
    "mel-bank-vs-direct": check_mel_bank,
    "align-standardize": check_align_standardize,
    "finite-difference-gradients": check_gradients,
    "merge-algebra": check_merge_algebra,
    "scattering-nonexpansive": check_nonexpansive,
}


def run_selftest(out=print) -> int:
    failed = 0
    for name, fn in CHECKS.items():
        ok, detail = fn()
        failed += not ok
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if failed == 0 else 3
