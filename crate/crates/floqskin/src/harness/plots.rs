//! Matplotlib scripts emitted next to the CSV files. They only read the CSVs
//! of their own directory.

use super::config::Experiment;

const HEADER: &str = r#"#!/usr/bin/env python3
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def load(name):
    with open(os.path.join(HERE, name), newline="") as f:
        rows = list(csv.DictReader(f))
    out = defaultdict(list)
    for r in rows:
        for k, v in r.items():
            try:
                out[k].append(float(v))
            except ValueError:
                out[k].append(v)
    return out


def save(fig, name):
    path = os.path.join(HERE, name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    print(path)
"#;

fn spectrum_axes(ax: &str) -> String {
    format!(
        r#"pbc = load("spectrum_pbc.csv")
obc = load("spectrum_obc.csv")
{ax}.plot(pbc["re_E"], pbc["im_E"], ".", ms=2, color="0.6", label="PBC")
edge = [i for i, f in enumerate(obc["edge_flag"]) if f == 1.0]
bulk = [i for i, f in enumerate(obc["edge_flag"]) if f != 1.0]
{ax}.plot([obc["re_E"][i] for i in bulk], [obc["im_E"][i] for i in bulk], ".", ms=3, color="C0", label="OBC")
{ax}.plot([obc["re_E"][i] for i in edge], [obc["im_E"][i] for i in edge], "*", ms=8, color="C3", label="edge")
{ax}.set_xlabel("Re E")
{ax}.set_ylabel("Im E")
{ax}.legend()
"#
    )
}

fn bands_axes(ax_re: &str, ax_im: &str) -> String {
    format!(
        r#"b = load("bands.csv")
by_band = defaultdict(lambda: ([], [], []))
for k, n, re, im in zip(b["k"], b["band_index"], b["re_eps"], b["im_eps"]):
    by_band[n][0].append(k)
    by_band[n][1].append(re)
    by_band[n][2].append(im)
for n, (k, re, im) in sorted(by_band.items()):
    {ax_re}.plot(k, re, label=f"band {{int(n)}}")
    {ax_im}.plot(k, im)
{ax_re}.set_ylabel("Re eps")
{ax_im}.set_ylabel("Im eps")
{ax_im}.set_xlabel("k")
{ax_re}.legend()
"#
    )
}

fn body(experiment: Experiment) -> String {
    match experiment {
        Experiment::Bands => format!(
            "fig, (a, b) = plt.subplots(2, 1, sharex=True, figsize=(5, 6))\n{}save(fig, \"bands.png\")\n",
            bands_axes("a", "b")
        ),
        Experiment::Spectrum => {
            format!("fig, ax = plt.subplots(figsize=(5, 4))\n{}save(fig, \"spectrum.png\")\n", spectrum_axes("ax"))
        }
        Experiment::Skin => r#"s = load("skin.csv")
fig, ax = plt.subplots(figsize=(5, 3))
ax.semilogy(s["x"], s["W"])
ax.set_xlabel("x")
ax.set_ylabel("W(x)")
save(fig, "skin.png")
"#
        .into(),
        Experiment::Gbz => format!(
            r#"fig, axes = plt.subplots(2, 2, figsize=(9, 8))
{}{}g = load("gbz.csv")
ax = axes[1][1]
colors = {{"none": "C0", "saddle": "C3", "cusp": "C2"}}
for tag, col in colors.items():
    idx = [i for i, t in enumerate(g["feature_tag"]) if t == tag]
    ax.plot([g["re_beta"][i] for i in idx], [g["im_beta"][i] for i in idx], ".", ms=3, color=col, label=tag)
import math
th = [2 * math.pi * i / 400 for i in range(401)]
ax.plot([math.cos(t) for t in th], [math.sin(t) for t in th], "k--", lw=0.8, label="BZ")
ax.set_aspect("equal")
ax.set_xlabel("Re beta")
ax.set_ylabel("Im beta")
ax.legend()
save(fig, "gbz.png")
s = load("skin.csv")
fig2, ax2 = plt.subplots(figsize=(5, 3))
ax2.semilogy(s["x"], s["W"])
ax2.set_xlabel("x")
ax2.set_ylabel("W(x)")
save(fig2, "skin.png")
"#,
            bands_axes("axes[0][0]", "axes[0][1]"),
            spectrum_axes("axes[1][0]")
        ),
        Experiment::Evolve => r#"e = load("evolution.csv")
ts = sorted(set(e["t"]))
L = int(max(e["site"])) + 1
grid = [[0.0] * L for _ in ts]
row = {t: i for i, t in enumerate(ts)}
for t, x, p in zip(e["t"], e["site"], e["density"]):
    grid[row[t]][int(x)] = p
fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.imshow(grid, aspect="auto", origin="lower", extent=[0, L, ts[0], ts[-1]], cmap="viridis")
a.set_xlabel("site")
a.set_ylabel("t")
tr = load("trajectory.csv")
b.plot(tr["t"], tr["center_of_mass"])
b.set_xlabel("t")
b.set_ylabel("center of mass (site)")
save(fig, "evolution.png")
"#
        .into(),
        Experiment::Impurity => r#"d = load("impurity.csv")
fig, ax = plt.subplots(figsize=(4, 3))
ax.bar(d["case"], d["reflected"])
ax.set_yscale("log")
ax.set_ylabel("reflected fraction")
save(fig, "impurity.png")
"#
        .into(),
        Experiment::Decay => r#"d = load("decay.csv")
s = load("decay_sub.csv")
fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.plot(d["t"], d["log_abs_G"])
a.set_xlabel("t")
a.set_ylabel("ln |G_aa|")
b.plot(s["t"], s["log_abs_G"], ".-")
b.set_xlabel("t")
b.set_ylabel("ln |G_aa| (within periods)")
save(fig, "decay.png")
"#
        .into(),
        Experiment::GammaSweep => r#"b = load("gamma_bands.csv")
d = load("gamma_drift.csv")
fig, (a, c, v) = plt.subplots(1, 3, figsize=(13, 4))
by_band = defaultdict(lambda: ([], [], []))
for g, n, im, vel in zip(b["gamma_a"], b["band_index"], b["im_eps"], b["velocity"]):
    by_band[n][0].append(g)
    by_band[n][1].append(im)
    by_band[n][2].append(vel)
for n, (g, im, vel) in sorted(by_band.items()):
    a.plot(g, im, ".-", label=f"band {int(n)}")
    v.plot(g, vel, ".-")
a.set_xlabel("gamma_a")
a.set_ylabel("Im eps(k=0)")
a.legend()
v.set_xlabel("gamma_a")
v.set_ylabel("velocity at k=0")
c.plot(d["gamma_a"], d["velocity"], "o-")
c.set_xlabel("gamma_a")
c.set_ylabel("drift velocity")
save(fig, "gamma_sweep.png")
"#
        .into(),
        Experiment::FreqSweep => r#"d = load("freq_sweep.csv")
fig, ax = plt.subplots(figsize=(4, 3))
ax.axhline(0, color="k", lw=0.5)
ax.plot(d["omega"], d["velocity"], "o")
ax.set_xlabel("Omega")
ax.set_ylabel("drift velocity")
save(fig, "freq_sweep.png")
"#
        .into(),
        Experiment::PhiScan => r#"d = load("phi_scan.csv")
fig, ax = plt.subplots(figsize=(5, 4))
ax.plot(d["phi0"], d["re_E"], ",", color="k")
ax.set_xlabel("phi0")
ax.set_ylabel("E")
save(fig, "phi_scan.png")
"#
        .into(),
        Experiment::Incommensurate => r#"d = load("near_half.csv")
w = load("near_half_weights.csv")
devs = sorted(set(d["deviation"]))
fig, axes = plt.subplots(2, len(devs), figsize=(4 * len(devs), 7), squeeze=False)
for j, dev in enumerate(devs):
    ax = axes[0][j]
    for band, col in (("I", "C0"), ("II", "C3"), ("III", "C2")):
        idx = [i for i, (x, b) in enumerate(zip(d["deviation"], d["band"])) if x == dev and b == band]
        ax.plot([d["re_E"][i] for i in idx], [d["im_E"][i] for i in idx], ".", ms=3, color=col, label=band)
    ax.set_title(f"flux - 1/2 = {dev:.3g}")
    ax.legend()
    ax = axes[1][j]
    idx = [i for i, x in enumerate(w["deviation"]) if x == dev]
    for key, col in (("W_I", "C0"), ("W_II", "C3"), ("W_III", "C2")):
        ax.semilogy([w["x"][i] for i in idx], [max(w[key][i], 1e-300) for i in idx], color=col, label=key)
    ax.set_xlabel("x")
    ax.legend()
save(fig, "near_half.png")
"#
        .into(),
        Experiment::SymmetryCheck => r#"d = load("symmetry.csv")
fig, ax = plt.subplots(figsize=(5, 3))
ax.bar(d["relation"], [max(x, 1e-18) for x in d["max_deviation"]])
ax.set_yscale("log")
ax.set_ylabel("max deviation")
save(fig, "symmetry.png")
"#
        .into(),
    }
}

pub fn script(experiment: Experiment, preset: Option<&str>) -> String {
    let title = preset.unwrap_or(experiment.name());
    format!("{HEADER}\n# {title}\n{}", body(experiment))
}
