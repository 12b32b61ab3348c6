"""Independent numpy reference values for the C++ tests.

Run `python3 truth_models.py > values.json` to regenerate; the tests read the
frozen values.json and never call Python.
"""
import json

import numpy as np

HBAR = 0.6582119569  # eV fs
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
DE = 0.0205


def wavepacket(grid, center, sigma, gdd):
    x = grid - center
    a = np.exp(-x**2 / (4 * sigma**2)) * np.exp(0.5j * gdd * (x / HBAR) ** 2)
    return a / np.linalg.norm(a)


def argon_sigma(purity, so):
    return so / (2.0 * np.sqrt(-np.log((purity - 5 / 9) / (4 / 9))))


def helium(grid, fwhm=0.144, gdd=20.0):
    p = wavepacket(grid, 30.0 - 24.59, fwhm / FWHM_PER_SIGMA, gdd)
    r = np.outer(p, p.conj())
    return r / np.trace(r).real


def argon(grid, sigma, so=0.177, gdd=0.0):
    c = 30.0 - 15.76
    a = wavepacket(grid, c, sigma, gdd)
    b = wavepacket(grid, c - so, sigma, gdd)
    r = 2 / 3 * np.outer(a, a.conj()) + 1 / 3 * np.outer(b, b.conj())
    return r / np.trace(r).real


def amplitude_state(r):
    a = np.abs(r)
    a = 0.5 * (a + a.T)
    a /= np.trace(a)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0, None)
    return (v * (w / w.sum())) @ v.T


def psd_root(a):
    w, v = np.linalg.eigh(a)
    w = np.where(w > len(w) * 1e-15 * np.abs(w).max(), w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def fidelity(ra, rb):
    # nuclear norm of sqrt(a) sqrt(b), equal to tr sqrt(sqrt(b) a sqrt(b))
    a, b = amplitude_state(ra), amplitude_state(rb)
    s = np.linalg.svd(psd_root(a) @ psd_root(b), compute_uv=False)
    return float(np.clip(s.sum(), 0, 1))


def kernel(fwhm):
    s = fwhm / FWHM_PER_SIGMA
    half = int(np.ceil(5 * s / DE))
    x = (np.arange(2 * half + 1) - half) * DE
    k = np.exp(-0.5 * x**2 / s**2)
    return k / k.sum()


def blur_matrix(n, k):
    half = len(k) // 2
    c = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - half), min(n, i + half + 1)):
            c[i, j] = k[j + half - i]
        c[i] /= c[i].sum()
    return c


def spectrogram(r, beat, delays, fwhm):
    k = int(round(beat / DE))
    nf = r.shape[0] - k
    dc = np.real(np.diag(r))[:nf] + np.real(np.diag(r))[k:k + nf]
    coh = 2 * np.array([r[i, i + k] for i in range(nf)])
    dw = beat / HBAR
    ideal = dc[None, :] + np.real(coh[None, :] * np.exp(1j * dw * np.asarray(delays))[:, None])
    return ideal @ blur_matrix(nf, kernel(fwhm)).T if fwhm > 0 else ideal


def main():
    out = {}
    he_grid = 5.205 + DE * np.arange(21)
    sig_ar = argon_sigma(0.61, 0.177)
    ar_grid = (30.0 - 15.76 - 0.177 - 0.205) + DE * np.arange(30)
    rh = helium(he_grid)
    ra = argon(ar_grid, sig_ar)

    out["argon_sigma"] = float(sig_ar)
    out["helium_purity"] = float(np.sum(np.abs(rh) ** 2))
    out["argon_purity"] = float(np.sum(np.abs(ra) ** 2))
    out["argon_concurrence"] = float(np.sqrt(2 * (1 - out["argon_purity"])))
    out["helium_element_3_10"] = [float(rh[3, 10].real), float(rh[3, 10].imag)]
    out["argon_element_5_12"] = [float(ra[5, 12].real), float(ra[5, 12].imag)]

    k = int(round(0.134 / DE))
    sub_h = np.abs(np.diag(rh, k)).mean()
    sub_a = np.abs(np.diag(ra, k)).mean()
    out["offset134_mean_abs_helium"] = float(sub_h)
    out["offset134_mean_abs_argon"] = float(sub_a)
    out["offset134_ratio"] = float(sub_a / sub_h)

    # widely split channels on a wide grid: purity -> 4/9 + 1/9
    wide = 14.24 - 1.5 - 0.4 + DE * np.arange(120)
    out["argon_split_1p5_purity"] = float(np.sum(np.abs(argon(wide, 0.144 / FWHM_PER_SIGMA, so=1.5)) ** 2))

    # fidelity between the chirped helium state and an unchirped, broader one
    rb = helium(he_grid, fwhm=0.2, gdd=0.0)
    out["fidelity_helium_fwhm144_vs_fwhm200"] = fidelity(rh, rb)
    # pure state against its own populations: F = sqrt(sum_i rho_ii^2)
    out["fidelity_helium_vs_own_populations"] = float(np.sqrt(np.sum(np.real(np.diag(rh)) ** 2)))

    delays = np.arange(0, 251, 5.0)
    s = spectrogram(rh, 0.080, delays, 0.080)
    out["spectrogram_helium_80meV_blur80"] = {
        "rows": [3, 17, 40],
        "cols": [0, 6, 12],
        "values": [[float(s[t, i]) for i in [0, 6, 12]] for t in [3, 17, 40]],
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
