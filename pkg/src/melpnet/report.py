"""Evaluation output: delimited rows, an aligned text table, and the
figures rendered next to them."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless rendering, must precede pyplot
import matplotlib.pyplot as plt  # noqa: E402

CSV_FIELDS = ("variant", "noise", "snr_db", "n_utterances",
              "vuv_error_pct", "gain_rmse_db", "f0_rmse_hz", "lsd_db",
              "stoi")


def _fmt(val, digits=4):
    if val is None:
        return ""
    if isinstance(val, float):
        if val != val:  # nan -> blank
            return ""
        return f"{val:.{digits}f}"
    return str(val)


def _rows_of(report):
    for row in list(report.rows) + [report.overall]:
        yield {
            "variant": report.variant,
            "noise": row.noise,
            "snr_db": _fmt(row.snr_db, 1),
            "n_utterances": row.n_utterances,
            "vuv_error_pct": _fmt(row.vuv_error_pct),
            "gain_rmse_db": _fmt(row.gain_rmse_db),
            "f0_rmse_hz": _fmt(row.f0_rmse_hz),
            "lsd_db": _fmt(row.lsd_db),
            "stoi": _fmt(row.stoi),
        }


def write_csv(reports, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        w.writeheader()
        for rep in reports:
            for row in _rows_of(rep):
                w.writerow(row)


def format_table(reports) -> str:
    header = ("variant", "noise", "snr", "utts", "vuv%", "gain", "f0",
              "lsd", "stoi")
    table = [header]
    for rep in reports:
        for row in _rows_of(rep):
            table.append((row["variant"], row["noise"], row["snr_db"],
                          str(row["n_utterances"]), row["vuv_error_pct"],
                          row["gain_rmse_db"], row["f0_rmse_hz"] or "-",
                          row["lsd_db"], row["stoi"] or "-"))
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for idx, r in enumerate(table):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


_METRIC_LABELS = (("lsd_db", "LSD (dB)"),
                  ("vuv_error_pct", "VUV error (%)"),
                  ("gain_rmse_db", "Gain RMSE (dB)"),
                  ("f0_rmse_hz", "F0 RMSE (Hz)"),
                  ("stoi", "STOI"))


def plot_metric_vs_snr(reports, metric: str, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in reports:
        series = {}
        for row in rep.rows:
            val = getattr(row, metric)
            if val is None:
                continue
            series.setdefault(row.noise, []).append((row.snr_db, val))
        for noise, pts in sorted(series.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", label=f"{rep.variant}/{noise}")
    label = dict(_METRIC_LABELS).get(metric, metric)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curve(log_rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [r[0] for r in log_rows]
    ax.plot(epochs, [r[1] for r in log_rows], label="train MSE")
    ax.plot(epochs, [r[2] for r in log_rows], label="validation MSE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(reports, out_dir) -> list:
    """CSV + text table + one figure per metric; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    written = []
    csv_path = out / "metrics.csv"
    write_csv(reports, csv_path)
    written.append(csv_path)
    txt_path = out / "metrics.txt"
    txt_path.write_text(format_table(reports))
    written.append(txt_path)
    have_conditions = any(rep.rows for rep in reports)
    if have_conditions:
        for metric, _ in _METRIC_LABELS:
            fig_path = out / f"{metric}_vs_snr.png"
            plot_metric_vs_snr(reports, metric, fig_path)
            written.append(fig_path)
    return written
