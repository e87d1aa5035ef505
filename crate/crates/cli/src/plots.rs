//! Matplotlib script emission for run directories.
//!
//! Scripts are plain Python that read the run's CSV files at render time,
//! so they stay valid if the data is regenerated. Each writes a PNG next to
//! itself under `plots/`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::warn;

const PREAMBLE: &str = r#"import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
RUN = os.path.dirname(HERE)
SQRT2 = 2 ** 0.5


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    cols = rows[0].keys() if rows else []
    return {k: [float(r[k]) if r[k] != "" else float("nan") for r in rows] for k in cols}


def snapshots():
    out = []
    for path in glob.glob(os.path.join(RUN, "snapshots", "snapshot_t*.csv")):
        t = float(os.path.basename(path)[len("snapshot_t"):-len(".csv")])
        out.append((t, load(path)))
    return sorted(out, key=lambda p: p[0])


def save(fig, name):
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, name), dpi=150)
"#;

fn header(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect())
}

fn require(path: &Path, columns: &[&str]) -> Result<()> {
    let have = header(path)?;
    for c in columns {
        if !have.iter().any(|h| h == c) {
            bail!("{} is missing column '{c}'", path.display());
        }
    }
    Ok(())
}

fn profile_script(column: &str, label: &str, deviation: bool, png: &str) -> String {
    let value = if deviation {
        format!("[v - sum(s[\"{column}\"]) / len(s[\"{column}\"]) for v in s[\"{column}\"]]")
    } else {
        format!("s[\"{column}\"]")
    };
    format!(
        r#"{PREAMBLE}
fig, ax = plt.subplots(figsize=(5, 4))
for t, s in snapshots():
    values = {value}
    half = [(x, v) for x, v in zip(s["x1"], values) if x >= 0]
    ax.plot([p[0] for p in half], [p[1] for p in half], label="t = %.4g/sqrt2" % (t * SQRT2))
ax.set_xlabel("x1")
ax.set_ylabel("{label}")
ax.legend(fontsize=6)
save(fig, "{png}")
"#
    )
}

fn series_script(file: &str, t: &str, y: &str, se: Option<&str>, label: &str, png: &str) -> String {
    let draw = match se {
        Some(se) => format!(
            "ax.errorbar([x * SQRT2 for x in d[\"{t}\"]], d[\"{y}\"], yerr=d[\"{se}\"], fmt=\"-\", elinewidth=0.5)"
        ),
        None => format!("ax.plot([x * SQRT2 for x in d[\"{t}\"]], d[\"{y}\"])"),
    };
    format!(
        r#"{PREAMBLE}
d = load(os.path.join(RUN, "{file}"))
fig, ax = plt.subplots(figsize=(5, 4))
{draw}
ax.set_xlabel("sqrt2 t")
ax.set_ylabel("{label}")
save(fig, "{png}")
"#
    )
}

/// Log-log panel of one field with its slope panel beside it.
fn loglog_script(
    file: &str,
    y: &str,
    se: Option<&str>,
    slope: &str,
    label: &str,
    slope_label: &str,
    png: &str,
) -> String {
    let err = se
        .map(|se| format!("yerr=d[\"{se}\"], "))
        .unwrap_or_default();
    format!(
        r#"{PREAMBLE}
d = load(os.path.join(RUN, "{file}"))
pts = [(t * SQRT2, v, i) for i, (t, v) in enumerate(zip(d["t"], d["{y}"])) if t > 0 and v > 0]
fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
kw = dict({err})
if kw:
    kw["yerr"] = [kw["yerr"][i] for _, _, i in pts]
left.errorbar([p[0] for p in pts], [p[1] for p in pts], fmt="-", elinewidth=0.5, **kw)
left.set_xscale("log")
left.set_yscale("log")
left.set_xlabel("sqrt2 t")
left.set_ylabel("{label}")
slope_path = os.path.join(RUN, "slopes.csv")
if os.path.exists(slope_path):
    s = load(slope_path)
    if "{slope}" in s:
        right.plot([t * SQRT2 for t in s["t"]], s["{slope}"])
right.set_xscale("log")
right.set_xlabel("sqrt2 t")
right.set_ylabel("{slope_label}")
save(fig, "{png}")
"#
    )
}

fn cns_script() -> String {
    format!(
        r#"{PREAMBLE}
d = load(os.path.join(RUN, "series.csv"))
pts = [i for i, t in enumerate(d["t"]) if t > 0]
fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
left.loglog([d["t"][i] for i in pts], [d["theta_av"][i] for i in pts], label="computed")
left.loglog([d["t"][i] for i in pts], [d["theta_closed_form"][i] for i in pts], "--", label="closed form")
left.set_xlabel("t")
left.set_ylabel("theta_av")
left.legend()
right.semilogx([d["t"][i] for i in pts], [d["slope_estimate"][i] for i in pts])
right.set_xlabel("t")
right.set_ylabel("d ln theta_av / d ln t")
save(fig, "cns_theta_av.png")
"#
    )
}

fn steady_script() -> String {
    format!(
        r#"{PREAMBLE}
d = load(os.path.join(RUN, "solution.csv"))
shells = {{}}
for i in range(len(d["kx"])):
    k = max(abs(d["kx"][i]), abs(d["ky"][i]), abs(d["kz"][i]))
    e = sum(d[c][i] ** 2 for c in ("re1", "im1", "re2", "im2", "re3", "im3"))
    shells[k] = shells.get(k, 0.0) + e
ks = sorted(shells)
fig, ax = plt.subplots(figsize=(5, 4))
ax.semilogy(ks, [shells[k] for k in ks], "o-")
ax.set_xlabel("|k|_inf")
ax.set_ylabel("sum |c_k|^2")
save(fig, "steady_spectrum.png")
"#
    )
}

/// Writes plot scripts into `<run_dir>/plots/` and returns their paths.
/// A directory with no recognised series produces a warning and no files.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        bail!("{} is not a directory", run_dir.display());
    }
    let series = run_dir.join("series.csv");
    let aggregate = run_dir.join("aggregate.csv");
    let solution = run_dir.join("solution.csv");
    let mut scripts: Vec<(&str, String)> = Vec::new();
    if aggregate.exists() {
        require(&aggregate, &["t", "theta_av_mean", "theta_av_se", "u2_av_mean", "u2_av_se"])?;
        let f = "aggregate.csv";
        scripts.push(("dsmc_theta_av.py", series_script(f, "t", "theta_av_mean", Some("theta_av_se"), "theta_av", "dsmc_theta_av.png")));
        scripts.push(("dsmc_u2_av.py", series_script(f, "t", "u2_av_mean", Some("u2_av_se"), "|u2|_av", "dsmc_u2_av.png")));
        scripts.push(("dsmc_theta_av_loglog.py", loglog_script(f, "theta_av_mean", Some("theta_av_se"), "alpha", "theta_av", "alpha", "dsmc_theta_av_loglog.png")));
        scripts.push(("dsmc_u2_av_loglog.py", loglog_script(f, "u2_av_mean", Some("u2_av_se"), "beta", "|u2|_av", "beta", "dsmc_u2_av_loglog.png")));
    } else if series.exists() && header(&series)?.iter().any(|h| h == "theta_closed_form") {
        require(&series, &["t", "theta_av", "theta_closed_form", "slope_estimate"])?;
        scripts.push(("cns_theta_av.py", cns_script()));
    } else if series.exists() {
        require(&series, &["t", "theta_av", "u2_av"])?;
        let snaps = run_dir.join("snapshots");
        if snaps.is_dir() {
            for e in fs::read_dir(&snaps)? {
                let p = e?.path();
                if p.extension().is_some_and(|x| x == "csv") {
                    require(&p, &["x1", "rho", "u1", "u2", "theta"])?;
                }
            }
        }
        let f = "series.csv";
        scripts.push(("a_u2_profiles.py", profile_script("u2", "u2", false, "a_u2_profiles.png")));
        scripts.push(("b_theta_av.py", series_script(f, "t", "theta_av", None, "theta_av", "b_theta_av.png")));
        scripts.push(("c_theta_deviation.py", profile_script("theta", "theta - theta_av", true, "c_theta_deviation.png")));
        scripts.push(("d_rho_profiles.py", profile_script("rho", "rho", false, "d_rho_profiles.png")));
        scripts.push(("e_u1_profiles.py", profile_script("u1", "u1", false, "e_u1_profiles.png")));
        scripts.push(("f_theta_av_loglog.py", loglog_script(f, "theta_av", None, "alpha", "theta_av", "alpha", "f_theta_av_loglog.png")));
        scripts.push(("g_u2_av_loglog.py", loglog_script(f, "u2_av", None, "beta", "|u2|_av", "beta", "g_u2_av_loglog.png")));
    } else if solution.exists() {
        require(&solution, &["kx", "ky", "kz", "re1", "im1", "re2", "im2", "re3", "im3"])?;
        scripts.push(("steady_spectrum.py", steady_script()));
    }
    if scripts.is_empty() {
        warn!("no plottable series in {}", run_dir.display());
        return Ok(Vec::new());
    }
    let dir = run_dir.join("plots");
    fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    for (name, body) in scripts {
        let p = dir.join(name);
        fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}
