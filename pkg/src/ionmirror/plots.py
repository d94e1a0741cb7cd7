"""Matplotlib figure renderers for the report path.

Each renderer writes a PNG next to the delimited output.  Figures are kept
deterministic: fixed size and dpi, metadata scrubbed, no timestamps.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update(
    {
        "figure.figsize": (6.4, 4.2),
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "savefig.dpi": 150,
    }
)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def emission_figure(path, aperture, patterns: dict[str, np.ndarray], theta_deg: np.ndarray):
    """Dipole patterns versus polar angle plus the captured NA box."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.6))
    for label, vals in patterns.items():
        ax1.plot(theta_deg, vals, label=label)
    ax1.set_xlabel("angle from quantization axis (deg)")
    ax1.set_ylabel("intensity (1/sr)")
    ax1.legend()
    ax1.set_title("dipole emission patterns")

    na_w, na_l = aperture.na_width, aperture.na_length
    rect = plt.Rectangle((-na_w, -na_l), 2 * na_w, 2 * na_l, fill=False, color="C3", label="aperture")
    ax2.add_patch(rect)
    if aperture.iris_na:
        ax2.add_patch(plt.Circle((0, 0), aperture.iris_na, fill=False, color="C0", ls="--", label="iris"))
    ax2.set_xlim(-1, 1)
    ax2.set_ylim(-1, 1)
    ax2.set_aspect("equal")
    ax2.set_xlabel("NA (width axis)")
    ax2.set_ylabel("NA (length axis)")
    ax2.set_title("captured direction cosines")
    ax2.legend(loc="upper right")
    fig.tight_layout()
    return _save(fig, path)


def psf_figure(path, field, metrics, crop_um: float = 1.5):
    """Image-plane intensity with horizontal / vertical cross sections."""
    x, y = field.coords_nm()
    inten = field.intensity()
    selx = np.abs(x) <= crop_um * 1e3
    sely = np.abs(y) <= crop_um * 1e3
    crop = inten[np.ix_(selx, sely)]
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4))
    axes[0].imshow(
        crop.T / crop.max(),
        origin="lower",
        extent=[x[selx][0] * 1e-3, x[selx][-1] * 1e-3, y[sely][0] * 1e-3, y[sely][-1] * 1e-3],
        cmap="inferno",
        aspect="equal",
    )
    axes[0].set_xlabel("x (um)")
    axes[0].set_ylabel("y (um)")
    axes[0].set_title("image intensity")
    ic = np.unravel_index(np.argmax(inten), inten.shape)
    for ax, coords, cut, fwhm, label in (
        (axes[1], x[selx] * 1e-3, inten[selx, ic[1]], metrics.fwhm_h_nm, "H"),
        (axes[2], y[sely] * 1e-3, inten[ic[0], sely], metrics.fwhm_v_nm, "V"),
    ):
        ax.plot(coords, cut / cut.max())
        ax.set_xlabel(f"{label} (um)")
        ax.set_ylabel("norm. intensity")
        ax.set_title(f"{label} cut, FWHM {fwhm:.0f} nm")
    fig.tight_layout()
    return _save(fig, path)


def grating_figure(path, profile, crop_um: float = 20.0):
    """Central height-map patch and the relief along the width axis."""
    x, y = profile.pixel_centers_um()
    selx = np.abs(x) <= crop_um
    sely = np.abs(y) <= crop_um
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    patch = profile.heights_nm[np.ix_(selx, sely)]
    ax1.imshow(
        patch.T,
        origin="lower",
        extent=[x[selx][0], x[selx][-1], y[sely][0], y[sely][-1]],
        cmap="viridis",
        aspect="equal",
    )
    ax1.set_xlabel("x (um)")
    ax1.set_ylabel("y (um)")
    ax1.set_title("relief height (nm)")
    mid = np.argmin(np.abs(y))
    ax2.step(x[selx], profile.heights_nm[selx, mid], lw=0.7)
    ax2.set_xlabel("x (um)")
    ax2.set_ylabel("height (nm)")
    ax2.set_title("relief along width axis")
    fig.tight_layout()
    return _save(fig, path)


def protocol_figure(path, sequence, summary):
    """Stage timing diagram and the pump scatter-count distribution."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    t0 = 0.0
    beam_rows = {"sigma+": 1.0, "sigma-": 2.0}
    for stage in sequence.stages:
        w0, w1 = stage.window()
        for beam in stage.beams:
            ax1.plot([t0 + w0, t0 + w1], [beam_rows[beam]] * 2, lw=6, color="C0")
        if stage.detection_gate:
            ax1.axvspan(t0, t0 + stage.duration_ns, color="C2", alpha=0.2)
        ax1.annotate(stage.name, (t0 + stage.duration_ns / 2, 2.55), ha="center", fontsize=8)
        ax1.axvline(t0, color="0.8", lw=0.5)
        t0 += stage.duration_ns
    ax1.set_yticks(list(beam_rows.values()), list(beam_rows.keys()))
    ax1.set_ylim(0.4, 2.9)
    ax1.set_xlabel("time in cycle (ns)")
    ax1.set_title(f"pulse sequence, {summary.cycle_ns:.0f} ns cycle")

    hist = summary.pump_scatter_histogram
    if hist:
        ks = sorted(hist)
        total = sum(hist.values())
        ax2.bar(ks, [hist[k] / total for k in ks], color="C1", label="simulated")
        kk = np.arange(1, max(ks) + 1)
        ax2.plot(kk, (2 / 3) ** (kk - 1) / 3, "k.", ms=4, label="geometric p=1/3")
        ax2.legend()
    ax2.set_xlabel("scatters per pump transfer")
    ax2.set_ylabel("probability")
    ax2.set_title(f"mean {summary.mean_scatters_per_pump:.3f}")
    fig.tight_layout()
    return _save(fig, path)


def g2_figure(path, hist, g2):
    """Coincidence comb with the g2(0) annotation."""
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    centers = hist.bin_centers_ns() * 1e-3
    ax.fill_between(centers, hist.counts, step="mid", color="C0", alpha=0.9)
    ax.set_xlabel("delay (us)")
    ax.set_ylabel("coincidences")
    ax.set_title(f"g2(0) = {g2.value:.3f} +- {g2.uncertainty:.3f}")
    fig.tight_layout()
    return _save(fig, path)


def coupling_figure(path, scan, m2_avg: float):
    """Overlap and quality-degraded coupling versus telescope magnification."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.semilogx(scan.scan_magnifications, scan.scan_overlaps, label="mode overlap")
    ax.semilogx(
        scan.scan_magnifications,
        scan.scan_overlaps / m2_avg,
        "--",
        label=f"coupling at M2 = {m2_avg:.2f}",
    )
    ax.axvline(scan.magnification, color="0.6", lw=0.8)
    ax.set_xlabel("relative magnification")
    ax.set_ylabel("efficiency")
    ax.set_ylim(0, 1.02)
    ax.legend()
    ax.set_title(f"optimum overlap {scan.overlap:.3f} at m = {scan.magnification:.3f}")
    fig.tight_layout()
    return _save(fig, path)


def budget_figure(path, rows: list[dict], total_label: str, total: float):
    """Horizontal waterfall of stage efficiencies down to the chain product."""
    fig, ax = plt.subplots(figsize=(6.8, 0.5 * (len(rows) + 2) + 1.2))
    names = [r["name"] for r in rows] + [total_label]
    running = []
    acc = 1.0
    for r in rows:
        acc *= r["value"]
        running.append(acc)
    vals = [r["value"] for r in rows] + [total]
    cum = running + [total]
    ypos = np.arange(len(names))[::-1]
    ax.barh(ypos, vals, color=["C0"] * len(rows) + ["C3"], alpha=0.85)
    for yp, v, c in zip(ypos, vals, cum):
        ax.annotate(f"{v:.3g}  (running {c:.3g})", (v, yp), xytext=(4, -3), textcoords="offset points", fontsize=8)
    ax.set_yticks(ypos, names)
    ax.set_xlabel("efficiency")
    ax.set_xlim(0, 1.05)
    fig.tight_layout()
    return _save(fig, path)
