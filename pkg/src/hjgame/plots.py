"""Figure rendering and plot-data emission for solutions and certificates.

Figures are rendered headless to PNG next to the delimited artifacts; the
svg-data format writes self-contained SVG polyline documents for downstream
tooling that wants vector data without matplotlib.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .solutions import AdmissibleSolution, NonexistenceCertificate


def _piece_polylines(solution: AdmissibleSolution):
    polys = []
    for k, pc in enumerate(solution.pieces):
        if pc.p is not None:
            polys.append((k, pc.p))
        else:
            polys.append((k, np.array([pc.p_const])))
    return polys


def _equilibria(solution: AdmissibleSolution):
    eqs = []
    seen = set()
    for pc in solution.pieces:
        key = (round(pc.K[0], 12), round(pc.K[1], 12))
        if key not in seen and not any(math.isnan(v) for v in pc.K):
            seen.add(key)
            eqs.append(pc.K)
    return eqs


def render_phase_figure(solution: AdmissibleSolution, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 5.5))
    for k, poly in _piece_polylines(solution):
        if len(poly) > 1:
            ax.plot(poly[:, 0], poly[:, 1], lw=1.2, label=f"piece {k}")
        else:
            ax.plot(poly[:, 0], poly[:, 1], "o", ms=4, label=f"piece {k}")
    for eq in _equilibria(solution):
        ax.plot(*eq, "k*", ms=11)
    ax.plot(0.0, 0.0, "k+", ms=9)
    ax.set_xlabel("p1")
    ax.set_ylabel("p2")
    ax.set_title(f"gradient-plane portrait ({solution.regime.value})")
    ax.grid(alpha=0.3)
    if len(solution.pieces) <= 8:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_profile_figure(solution: AdmissibleSolution, path) -> None:
    if solution.profile_x is None:
        from .solutions import reconstruct_values

        reconstruct_values(solution)
    xs = solution.profile_x
    p = solution.profile_p
    u = solution.profile_u
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    ax1.plot(xs, p[:, 0], lw=1.0, label="p1")
    ax1.plot(xs, p[:, 1], lw=1.0, label="p2")
    ax1.set_ylabel("gradient")
    ax1.grid(alpha=0.3)
    ax1.legend(fontsize=8)
    ax2.plot(xs, u[:, 0], lw=1.0, label="u1")
    ax2.plot(xs, u[:, 1], lw=1.0, label="u2")
    ax2.set_xlabel("x")
    ax2.set_ylabel("value")
    ax2.grid(alpha=0.3)
    ax2.legend(fontsize=8)
    fig.suptitle(f"solution profile ({solution.regime.value})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_probe_figure(cert: NonexistenceCertificate, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 5.5))
    by_cat: dict[str, list] = {}
    for row in cert.probes:
        by_cat.setdefault(row["category"], []).append((row["p1"], row["p2"]))
    for cat, pts in sorted(by_cat.items()):
        arr = np.asarray(pts)
        ax.scatter(arr[:, 0], arr[:, 1], s=14, label=f"{cat} ({len(pts)})")
    ax.plot(0.0, 0.0, "k+", ms=9)
    ax.set_xlabel("p1")
    ax.set_ylabel("p2")
    ax.set_title(f"probe outcomes: {cert.inconsistent_count}/{cert.n_probes} inconsistent")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_phase_csv(solution: AdmissibleSolution, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("piece_index,p1,p2\n")
        for k, poly in _piece_polylines(solution):
            for row in poly:
                fh.write(f"{k},{float(row[0])!r},{float(row[1])!r}\n")


def write_marker_csv(solution: AdmissibleSolution, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind,p1,p2\n")
        fh.write("origin,0.0,0.0\n")
        for eq in _equilibria(solution):
            fh.write(f"equilibrium,{float(eq[0])!r},{float(eq[1])!r}\n")


def write_xprofile_csv(solution: AdmissibleSolution, path) -> None:
    if solution.profile_x is None:
        from .solutions import reconstruct_values

        reconstruct_values(solution)
    xs, p, u = solution.profile_x, solution.profile_p, solution.profile_u
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,p1,p2,u1,u2\n")
        for i in range(len(xs)):
            row = (xs[i], p[i, 0], p[i, 1], u[i, 0], u[i, 1])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _svg_document(polylines, markers, width=640, height=560) -> str:
    pts = np.vstack([poly for poly, _ in polylines] + [np.asarray(markers)])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.05 * span

    def to_px(q):
        sx = (q[:, 0] - lo[0] + pad[0]) / (span[0] + 2 * pad[0]) * width
        sy = height - (q[:, 1] - lo[1] + pad[1]) / (span[1] + 2 * pad[1]) * height
        return sx, sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    for i, (poly, label) in enumerate(polylines):
        sx, sy = to_px(np.asarray(poly))
        coords = " ".join(f"{px:.3f},{py:.3f}" for px, py in zip(sx, sy))
        color = palette[i % len(palette)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{coords}"><title>{label}</title></polyline>'
        )
    mx, my = to_px(np.asarray(markers))
    for px, py in zip(mx, my):
        parts.append(f'<circle cx="{px:.3f}" cy="{py:.3f}" r="4" fill="#000000"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_phase_svg(solution: AdmissibleSolution, path) -> None:
    polylines = [
        (poly, f"piece {k}") for k, poly in _piece_polylines(solution) if len(poly) > 1
    ]
    markers = [(0.0, 0.0)] + [list(eq) for eq in _equilibria(solution)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_svg_document(polylines, markers))


def write_xprofile_svg(solution: AdmissibleSolution, path) -> None:
    if solution.profile_x is None:
        from .solutions import reconstruct_values

        reconstruct_values(solution)
    xs, p, u = solution.profile_x, solution.profile_p, solution.profile_u
    step = max(1, len(xs) // 4000)
    sl = slice(None, None, step)
    polylines = [
        (np.stack([xs[sl], p[sl, 0]], axis=1), "p1"),
        (np.stack([xs[sl], p[sl, 1]], axis=1), "p2"),
        (np.stack([xs[sl], u[sl, 0]], axis=1), "u1"),
        (np.stack([xs[sl], u[sl, 1]], axis=1), "u2"),
    ]
    markers = [(float(xs[0]), 0.0)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_svg_document(polylines, markers))
