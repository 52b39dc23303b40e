"""Independent reference values, computed with mpmath only (no package code).

Run ``python3 tests/oracles/build_oracles.py`` to regenerate oracles.json.
"""
import json
import os

import mpmath as mp

mp.mp.dps = 30


def k0_series(x):
    # K0(x) = -(ln(x/2) + euler) I0(x) + sum (x^2/4)^k / (k!)^2 H_k
    x = mp.mpf(x)
    q = x * x / 4
    i0 = mp.mpf(0)
    tail = mp.mpf(0)
    term = mp.mpf(1)
    H = mp.mpf(0)
    for k in range(80):
        if k > 0:
            term *= q / (k * k)
            H += mp.mpf(1) / k
        i0 += term
        tail += term * H
    return -(mp.log(x / 2) + mp.euler) * i0 + tail


def cov_wn_brute(r, eps, m):
    def k(z):
        if z == 0:
            return mp.quad(lambda v: mp.e ** (-v / 2), [0, mp.inf]) / 2
        return mp.quad(lambda v: mp.e ** (-(m * z) ** 2 / (2 * v) - v / 2), [0, 1, 10, mp.inf]) / 2
    pts = list(mp.linspace(1, 1 / mp.mpf(eps), 12))
    return mp.quad(lambda u: k(u * r) / u, pts)


def mellin_gamma0_brute(d, s, alpha):
    # int_0^inf t^-s e^{-alpha t} e^{-d^2/2t} / (2 pi t) dt
    f = lambda t: t ** (-s) * mp.e ** (-alpha * t - d * d / (2 * t)) / (2 * mp.pi * t)
    return mp.quad(f, [0, d * d / 10, d * d, 1, 10, mp.inf])


def main():
    out = {}
    out["k0_1"] = float(k0_series(1))
    out["mff_small_r_offset"] = float(mp.log(2) - mp.euler)
    out["mff_r1e-4_minus_log"] = float(k0_series(mp.mpf("1e-4")) - mp.log(mp.mpf(10) ** 4))
    out["cov_wn_r0.5_eps0.01_m1"] = float(cov_wn_brute(mp.mpf("0.5"), mp.mpf("0.01"), 1))
    out["cov_wn_r0_eps0.1"] = {str(m): float(cov_wn_brute(0, mp.mpf("0.1"), mp.mpf(m)))
                               for m in ("0.5", "1", "2")}
    out["mellin_alpha0_s0.5_d0.25"] = float(mellin_gamma0_brute(mp.mpf("0.25"), mp.mpf("0.5"), 0))
    out["mellin_gamma0_alpha1"] = {f"{s}_{d}": float(mellin_gamma0_brute(mp.mpf(d), mp.mpf(s), 1))
                                   for s in ("0.3", "0.5", "0.7") for d in ("0.125", "0.25")}
    out["segment_energy_s0.25"] = float(
        2 * mp.quad(lambda x: mp.quad(lambda u: u ** mp.mpf("-0.5"), [0, x]), [0, 1]))
    # unit square, dyadic covering at 1/4: 16 boxes, radius 1/(4 sqrt 2)
    out["square_covering_s1_a1_d0.25"] = float(16 * mp.pi * (1 / (4 * mp.sqrt(2))) ** 2)
    # smaller root of 0.25 x^2 - 1.25 x + 0.5
    out["kpz_inverse_0.5_gamma1"] = float(min(mp.polyroots([0.25, -1.25, 0.5])))
    # int_{B(x, 1/4)} (1 + ln 1/|x - z|) dz in polar coordinates
    out["log_weight_lebesgue_r0.125"] = float(
        mp.quad(lambda p: 2 * mp.pi * p * (1 + mp.log(1 / p)), [0, mp.mpf("0.25")]))
    # Euclidean resolvent mass of B(0, 1/4) from its centre, alpha = 1
    r = mp.mpf("0.25")
    out["resolvent_gamma0_r0.25_alpha1"] = float(
        mp.quad(lambda p: 2 * p * mp.besselk(0, mp.sqrt(2) * p), [0, r]))
    out["resolvent_gamma0_r0.25_alpha1_killed2"] = float(
        mp.quad(lambda t: mp.e ** (-t) * (1 - mp.e ** (-r * r / (2 * t))), [0, r * r, 2]))
    # same quantity on the cell-centre ball of the default resolvent grid
    # (h = 1/64, cells centred at (k + 1/2) h), both killed at t = 2:
    # B sums the kernel at cell centres, A integrates it over the cells
    h = mp.mpf(1) / 64
    cells = [((i + mp.mpf(1) / 2) * h, (j + mp.mpf(1) / 2) * h)
             for i in range(-20, 20) for j in range(-20, 20)
             if ((i + 0.5) ** 2 + (j + 0.5) ** 2) * float(h) ** 2 <= 0.0625]

    def centre_sum(t):
        return sum(mp.e ** (-(cx * cx + cy * cy) / (2 * t)) for cx, cy in cells) * h * h / (2 * mp.pi * t)

    def cell_mass(t):
        sd = mp.sqrt(2 * t)
        q = lambda a: (mp.erf((a + h / 2) / sd) - mp.erf((a - h / 2) / sd)) / 2
        return sum(q(cx) * q(cy) for cx, cy in cells)

    mp.mp.dps = 15
    out["resolvent_gamma0_disc_centres_killed2"] = float(
        mp.quad(lambda t: mp.e ** (-t) * centre_sum(t), [0, h * h, r * r, 2]))
    out["resolvent_gamma0_disc_cells_killed2"] = float(
        mp.quad(lambda t: mp.e ** (-t) * cell_mass(t), [0, h * h, r * r, 2]))
    out["eta_critical_cascade_gamma1"] = float(1 / (1 + 2 * mp.log(2)))
    out["two_ln2"] = float(2 * mp.log(2))
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "oracles.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
