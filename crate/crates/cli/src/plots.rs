//! Matplotlib scripts written next to the CSVs with `--plot`.

pub fn sweep(csv: &str) -> String {
    format!(
        r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv}")))
g = [float(r["gamma"]) for r in rows]
fig, ax = plt.subplots()
for col, style, label in [
    ("P3_exact", "o", "P3 exact"),
    ("P4_exact", "s", "P4 exact"),
    ("P3_theory", "-", "P3 theory"),
    ("P4_theory", "--", "P4 theory"),
]:
    ax.plot(g, [float(r[col]) for r in rows], style, label=label, markersize=3)
ax.set_xscale("log")
ax.set_xlabel("Gamma T")
ax.set_ylabel("final population")
ax.legend()
fig.savefig("sweep.png", dpi=150)
"#
    )
}

pub fn populations(csvs: &[&str]) -> String {
    let list = csvs
        .iter()
        .map(|c| format!("\"{c}\""))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        r#"import csv
import matplotlib.pyplot as plt

files = [{list}]
fig, axes = plt.subplots(len(files), 1, figsize=(6, 3 * len(files)), squeeze=False)
for ax, name in zip(axes[:, 0], files):
    rows = list(csv.DictReader(open(name)))
    xi = [float(r["xi"]) for r in rows]
    for k in range(1, 6):
        ax.plot(xi, [float(r["P%d" % k]) for r in rows], label="P%d" % k)
    ax.set_title(name)
    ax.set_xlabel("t / T")
    ax.legend()
fig.tight_layout()
fig.savefig("populations.png", dpi=150)
"#
    )
}
