#!/usr/bin/env python3
"""Regenerates the bundled dispersion tables in this directory.

Every table covers 1200-1900 nm in 50 nm steps so that the 1550 nm design
wavelength is an exact node. Models and anchor values are listed in each
file's header.
"""
import math
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
GRID = [1200 + 50 * i for i in range(15)]
EV_NM = 1239.84198


def sellmeier(terms):
    def n(lam_nm):
        lam = lam_nm / 1000.0
        n2 = 1.0 + sum(b * lam * lam / (lam * lam - c * c) for b, c in terms)
        return math.sqrt(n2)
    return n


def drude_nk(eps_inf, wp_ev, gamma_ev):
    def nk(lam_nm):
        w = EV_NM / lam_nm
        eps = eps_inf - wp_ev ** 2 / (w * (w + 1j * gamma_ev))
        root = eps ** 0.5
        return root.real, abs(root.imag)
    return nk


def write(name, header, rows):
    path = HERE / f"{name}.csv"
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for line in header:
            f.write(f"# {line}\n")
        for row in rows:
            f.write(",".join(f"{v:.6g}" if i == 0 else f"{v:.6f}" for i, v in enumerate(row)) + "\n")


def isotropic(name, header, n_of, k_of=lambda lam: 0.0):
    write(name, header, [(lam, n_of(lam), k_of(lam)) for lam in GRID])


isotropic("sio2", [
    "material: SiO2 (thermal oxide)",
    "source: Malitson, JOSA 55, 1205 (1965), three-term Sellmeier, lambda in um",
    "k: 0 (transparent in the near infrared)",
    "columns: wavelength_nm,n,k",
], sellmeier([(0.6961663, 0.0684043), (0.4079426, 0.1162414), (0.8974794, 9.896161)]))

isotropic("si", [
    "material: Si (crystalline substrate)",
    "source: Li, J. Phys. Chem. Ref. Data 9, 561 (1980), room-temperature Sellmeier fit",
    "k: 0 below the indirect gap (lambda > 1.15 um)",
    "columns: wavelength_nm,n,k",
], sellmeier([(10.6684293, 0.301516485), (0.0030434748, 1.13475115), (1.54133408, 1104.0)]))

isotropic("hbn", [
    "material: hBN, in-plane (ordinary) index",
    "source: Lee et al., Phys. Status Solidi B 256, 1800417 (2019), single-oscillator",
    "        Sellmeier n^2 = 1 + 3.263 lambda^2 / (lambda^2 - 164.4 nm^2)",
    "k: 0 (wide-gap insulator)",
    "columns: wavelength_nm,n,k",
], sellmeier([(3.263, 0.1644)]))

isotropic("mos2", [
    "material: MoS2, multilayer, in-plane index",
    "source: single-oscillator Sellmeier (lambda0 = 0.50 um) anchored to n = 4.05 at 1550 nm,",
    "        approximating Ermolaev et al., npj 2D Mater. Appl. 4, 21 (2020) and",
    "        Munkhbat et al., ACS Photonics 9, 2398 (2022)",
    "k: 0 (below the indirect gap)",
    "columns: wavelength_nm,n,k",
], sellmeier([(13.80, 0.50)]))

isotropic("wse2", [
    "material: WSe2, multilayer, in-plane index",
    "source: single-oscillator Sellmeier (lambda0 = 0.55 um) anchored to n = 3.85 at 1550 nm,",
    "        approximating Munkhbat et al., ACS Photonics 9, 2398 (2022)",
    "k: 0 (below the indirect gap)",
    "columns: wavelength_nm,n,k",
], sellmeier([(12.08, 0.55)]))

au = drude_nk(1.0, 8.45, 0.047)
isotropic("au", [
    "material: Au (evaporated film)",
    "source: Drude fit of Olmon et al., Phys. Rev. B 86, 235147 (2012):",
    "        eps_inf = 1, hbar*omega_p = 8.45 eV, hbar*gamma = 0.047 eV (tau ~ 14 fs)",
    "columns: wavelength_nm,n,k",
], lambda lam: au(lam)[0], lambda lam: au(lam)[1])

isotropic("ti", [
    "material: Ti (sputtered adhesion layer)",
    "source: linear trend through approximate near-infrared values of Johnson & Christy,",
    "        Phys. Rev. B 9, 5056 (1974): (n, k) ~ (3.69, 4.59) at 1550 nm",
    "note: buried below 40 nm of Au; it has no measurable effect on the stack response",
    "columns: wavelength_nm,n,k",
], lambda lam: 3.69 + 0.0006 * (lam - 1550), lambda lam: 4.59 + 0.0025 * (lam - 1550))

write("bp", [
    "material: black phosphorus, multilayer (~25 nm), in-plane principal axes",
    "source: approximate bulk values after Schuster et al., Phys. Rev. Lett. 115, 157402 (2015)",
    "        and Lee et al. (2019): armchair n ~ 3.45 with k ~ 0.30 at 1550 nm",
    "        (alpha ~ 2.4e4 cm^-1); zigzag n ~ 3.20 with k two orders of magnitude",
    "        smaller (linear dichroism below the zigzag absorption edge)",
    "columns: wavelength_nm,n_ac,k_ac,n_zz,k_zz",
], [(lam,
     3.45 - 0.0002 * (lam - 1550),
     0.30 - 0.0003 * (lam - 1550),
     3.20 - 0.0001 * (lam - 1550),
     0.003 - 0.000003 * (lam - 1550)) for lam in GRID])
