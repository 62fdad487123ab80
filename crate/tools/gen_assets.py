"""Regenerates the spectral assets shipped in crates/core/assets.

CIE tables come from the `colour-science` package (CIE 1931 2-degree observer,
CIE D50, Robertson 1968 isotemperature lines). The synthetic camera, LED bank
and reflectance set are analytic and fully defined here.
"""
import json
import pathlib

import colour
import numpy as np
from colour.temperature import robertson1968

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "assets"
GRID = np.arange(380, 731, 5, dtype=float)


def r6(values):
    return [float(f"{v:.8g}") for v in values]


def gauss(center, sigma):
    return np.exp(-0.5 * ((GRID - center) / sigma) ** 2)


def sigmoid(center, width):
    return 1.0 / (1.0 + np.exp(-(GRID - center) / width))


def bundle(name, spectra):
    data = {"grid": r6(GRID), "spectra": {k: r6(v) for k, v in spectra.items()}}
    (OUT / name).write_text(json.dumps(data, indent=1) + "\n")


cmfs = colour.MSDS_CMFS["CIE 1931 2 Degree Standard Observer"].copy().align(
    colour.SpectralShape(380, 730, 5)
)
bundle(
    "cie1931_2deg.json",
    {"x_bar": cmfs.values[:, 0], "y_bar": cmfs.values[:, 1], "z_bar": cmfs.values[:, 2]},
)

d50 = colour.SDS_ILLUMINANTS["D50"].copy().align(colour.SpectralShape(380, 730, 5))
bundle("d50.json", {"D50": d50.values / 100.0})

bundle(
    "camera_sensitivities.json",
    {"r": gauss(600, 35), "g": gauss(540, 35), "b": gauss(460, 35)},
)

leds = {
    "royal_blue_450": gauss(450, 10),
    "blue_475": gauss(475, 12),
    "cyan_505": gauss(505, 14),
    "green_530": gauss(530, 16),
    "amber_590": gauss(590, 9),
    "red_630": gauss(630, 10),
    "deep_red_660": gauss(660, 11),
}
bundle("led_bank.json", leds)


def refl(base, *terms):
    r = np.full_like(GRID, base)
    for kind, a, c, w in terms:
        r = r + a * (gauss(c, w) if kind == "g" else sigmoid(c, w))
    return np.clip(r, 0.02, 0.95)


chart = {
    "01_dark_skin": refl(0.05, ("s", 0.30, 600, 30), ("g", 0.03, 470, 40)),
    "02_light_skin": refl(0.17, ("s", 0.45, 590, 30), ("g", 0.05, 480, 40)),
    "03_blue_sky": refl(0.06, ("g", 0.20, 470, 45), ("s", 0.08, 680, 20)),
    "04_foliage": refl(0.05, ("g", 0.12, 550, 30), ("s", 0.25, 700, 15)),
    "05_blue_flower": refl(0.18, ("g", 0.20, 450, 40), ("s", 0.30, 650, 25), ("g", -0.10, 560, 40)),
    "06_bluish_green": refl(0.08, ("g", 0.40, 500, 50), ("g", -0.03, 650, 40)),
    "07_orange": refl(0.05, ("s", 0.62, 585, 14)),
    "08_purplish_blue": refl(0.08, ("g", 0.30, 450, 30), ("s", 0.15, 660, 20)),
    "09_moderate_red": refl(0.10, ("s", 0.50, 600, 14), ("g", 0.05, 450, 30)),
    "10_purple": refl(0.06, ("g", 0.12, 440, 30), ("s", 0.28, 640, 25)),
    "11_yellow_green": refl(0.06, ("s", 0.50, 520, 16), ("s", -0.10, 650, 20)),
    "12_orange_yellow": refl(0.05, ("s", 0.65, 560, 14)),
    "13_blue": refl(0.05, ("g", 0.30, 445, 25)),
    "14_green": refl(0.05, ("g", 0.25, 530, 30)),
    "15_red": refl(0.04, ("s", 0.55, 610, 10)),
    "16_yellow": refl(0.05, ("s", 0.80, 530, 12)),
    "17_magenta": refl(0.15, ("g", 0.25, 430, 35), ("s", 0.50, 610, 15), ("g", -0.10, 540, 30)),
    "18_cyan": refl(0.05, ("g", 0.35, 480, 40), ("s", -0.02, 600, 20)),
    "19_white": refl(0.90),
    "20_neutral_8": refl(0.59),
    "21_neutral_6_5": refl(0.36),
    "22_neutral_5": refl(0.19),
    "23_neutral_3_5": refl(0.09),
    "24_black": refl(0.031),
}
bundle("chart_reflectances.json", chart)

# Chart reference XYZ under D50, normalized so the illuminant has Y = 1.
ybar = cmfs.values[:, 1]
norm = np.trapezoid(d50.values * ybar, GRID)
ref = []
for name, r in chart.items():
    xyz = [float(np.trapezoid(d50.values * r * cmfs.values[:, k], GRID) / norm) for k in range(3)]
    ref.append({"patch": name, "xyz": r6(xyz)})
(OUT / "chart_xyz_d50.json").write_text(json.dumps({"white": "D50", "patches": ref}, indent=1) + "\n")


# Robertson isotemperature lines, extended past 600 mired from Planck's law.
def planck_uv(mired):
    t = 1e6 / mired
    c1, c2 = 3.741771852e-16, 1.438776877e-2
    lam = GRID * 1e-9
    spd = c1 / lam**5 / (np.exp(c2 / (lam * t)) - 1.0)
    xyz = np.array([np.trapezoid(spd * cmfs.values[:, k], GRID) for k in range(3)])
    x, y, z = xyz
    d = x + 15 * y + 3 * z
    return 4 * x / d, 6 * y / d


def row(mired):
    u, v = planck_uv(mired)
    h = 0.5
    u0, v0 = planck_uv(mired - h)
    u1, v1 = planck_uv(mired + h)
    slope = -(u1 - u0) / (v1 - v0)
    return [mired, round(u, 5), round(v, 5), float(f"{slope:.5g}")]


published = [list(r) for r in robertson1968.DATA_ISOTEMPERATURE_LINES_ROBERTSON1968]
check = row(600.0)
print("check 600 mired computed vs published:", check, published[-1])
ext = [row(m) for m in (625.0, 650.0, 675.0)]
rows = [[float(r[0]), r[1], r[2], r[3]] for r in published] + ext
(OUT / "robertson_isotherms.json").write_text(
    json.dumps({"columns": ["mired", "u", "v", "slope"], "extended_from": 600.0, "rows": rows}, indent=1) + "\n"
)
print("ok")
