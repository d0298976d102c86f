"""Regenerate the frozen oracle values used in the test suite.

Everything here is computed with mpmath at 30 digits directly from the
closed forms, independently of the package code. Run ``python3 tests/oracles.py``.
"""
import mpmath as mp

mp.mp.dps = 30

LAM = mp.mpf("1.5e-6")
K = 2 * mp.pi / LAM
L = mp.mpf(1000)


def rho_m(cn2, length=L):
    return (mp.mpf("1.09") * K ** 2 * cn2 * length) ** (-mp.mpf(3) / 5)


def rytov(cn2, length=L):
    return mp.mpf("0.124") * cn2 * K ** (mp.mpf(7) / 6) * length ** (mp.mpf(11) / 6)


def overlap(z, d):
    u = z / d
    return d ** 2 / 2 * (mp.acos(u) - u * mp.sqrt(1 - u ** 2)) if z <= d else mp.mpf(0)


def gamma(beta):
    beta = mp.mpf(beta)
    d = 4 * mp.sqrt(beta)
    f = lambda v: 2 * mp.pi * v * mp.exp(-v ** 2 / 2) * overlap(v, d)
    return mp.quad(f, [0, d / 2, d]) / (4 * mp.pi * beta) ** 2


def preset_snr(kind, brightness_omega, omega_b_ti, cn2=mp.mpf("1e-14"), beta=1):
    """Pixel SNR at the long-range operating point, transcribed term by term."""
    a0 = mp.mpf("0.03")
    rho0 = mp.mpf("0.15e-3") / mp.pi
    rl = 2 * L / (K * a0)
    obt0 = mp.mpf("1e-3") if kind == "spdc" else mp.mpf("1e3")
    ti_t0 = omega_b_ti / obt0                      # T_I / T0
    bright = mp.mpf(brightness_omega) * obt0       # photons per spatiotemporal mode
    ap, eta, ab = rl ** 2 / 10, mp.mpf("0.9"), beta * mp.pi * a0 ** 2
    at2, tp = mp.mpf(50), mp.mpf(1)
    g = gamma(beta)
    s2 = rytov(cn2)
    s_r = 0 if kind == "computational" else s2
    mag = mp.exp(4 * (s_r + 2 * s2))
    d_src = at2 * (1 + mp.mpf(1) / beta) * mag / (mp.sqrt(2 * mp.pi) * rl ** 2)
    d_path = tp ** 2 * (mag * (g + 1) - 1)
    if kind == "computational":
        d_mix = tp * L ** 2 * mag / (eta * bright * ab)
        return tp ** 2 / (d_src / ti_t0 + d_path + d_mix / ti_t0)
    d_det = tp * rl ** 2 * mp.sqrt(mp.pi) * L ** 2 / (16 * mp.sqrt(2) * ap * eta ** 2 * bright ** 2 * ab)
    d_mix = (tp * L ** 2 * mp.exp(4 * s_r) / (eta * bright * ab)
             + mp.pi * rl ** 2 * tp ** 2 * (mp.mpf(4) / 3 + mp.mpf(1) / beta)
             * mp.exp(8 * s2) / (ap * eta * bright))
    if kind == "spdc":
        b = 1 + 1 / (4 * mp.sqrt(mp.pi) * bright)
        den = (4 / omega_b_ti * d_src + d_path * b ** 2 + 4 * mp.sqrt(2) / ti_t0 * d_det * b
               + d_mix / ti_t0 * (2 / mp.sqrt(3) + 1 / (4 * mp.sqrt(mp.pi) * bright)))
        return tp ** 2 * b ** 2 / den
    return tp ** 2 / (d_src / ti_t0 + d_path + obt0 / ti_t0 * d_det + d_mix / ti_t0)


def main():
    cn2 = mp.mpf("1e-14")
    print("rho_m", rho_m(cn2))
    print("sigma2", rytov(cn2))
    rho, a0 = mp.mpf("0.0427"), mp.mpf("0.03")
    print("alpha", 1 + a0 ** 2 / 2 * (2 / rho ** 2))
    for beta in ("1e-4", "0.5", "1", "2", "4", "10", "100"):
        print("gamma", beta, gamma(mp.mpf(beta)))
    print("overlap(1, 2)", overlap(mp.mpf(1), mp.mpf(2)))
    print("rho_L", 2 * L / (K * mp.mpf("0.03")))
    for kind in ("pseudothermal", "spdc", "computational"):
        for bo in (1, 10 ** 4):
            for obti in (10 ** 6, 10 ** 9):
                print("snr", kind, bo, obti, preset_snr(kind, bo, mp.mpf(obti)))
    print("snr beta=2 no turbulence", preset_snr("pseudothermal", 10 ** 4, mp.mpf(10) ** 15,
                                                 cn2=0, beta=2))


if __name__ == "__main__":
    main()
