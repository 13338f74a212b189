//! `emit-plots`: a matplotlib script over the CSV outputs of a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Plot recipe per known CSV: x column, y columns, grouping column.
const RECIPES: &[(&str, &str, &[&str], Option<&str>)] = &[
    ("profile.csv", "x", &["sigma_n", "sigma_asymptotic"], None),
    ("cov.csv", "y", &["empirical", "limit"], Some("x")),
    ("time_cov.csv", "t", &["cov_u0_ut"], Some("x")),
    ("partition.csv", "n", &["ratio"], None),
    ("fields.csv", "x", &["value"], Some("t")),
    ("pde.csv", "x", &["value"], Some("t")),
    ("kpz.csv", "x", &["xi", "barrier"], Some("t")),
    ("mean.csv", "l", &["mean_xi", "mild"], Some("t")),
    ("front.csv", "t", &["measured", "formula"], None),
    ("density.csv", "x", &["density"], Some("t")),
    (
        "kernel.csv",
        "ct",
        &[
            "spectral_vs_uniformization",
            "spectral_vs_image_sum",
            "chapman_kolmogorov",
        ],
        Some("n"),
    ),
    ("line.csv", "a", &["tail", "bound"], Some("ct")),
    ("oracle.csv", "mask", &["mu", "nu_conditioned"], None),
];

/// Writes `plots.py` into `run_dir` and returns its path.
pub fn emit_plots(run_dir: &Path) -> Result<PathBuf> {
    let mut csvs: Vec<String> = std::fs::read_dir(run_dir)
        .with_context(|| format!("reading {}", run_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        bail!("missing data: no CSV files in {}", run_dir.display());
    }

    let mut py = String::from(
        "import csv\nimport os\nfrom collections import defaultdict\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\nHERE = os.path.dirname(os.path.abspath(__file__))\n\n\ndef load(name):\n    with open(os.path.join(HERE, name), newline=\"\") as f:\n        return list(csv.DictReader(f))\n\n\ndef plot(name, x, ys, group):\n    rows = load(name)\n    groups = defaultdict(list)\n    for r in rows:\n        groups[r[group] if group else \"\"].append(r)\n    fig, ax = plt.subplots()\n    for g, rs in sorted(groups.items()):\n        for y in ys:\n            label = f\"{y} {group}={g}\" if group else y\n            ax.plot([float(r[x]) for r in rs], [float(r[y]) for r in rs], label=label)\n    ax.set_xlabel(x)\n    ax.set_title(name)\n    ax.legend(fontsize=\"small\")\n    fig.savefig(os.path.join(HERE, name.replace(\".csv\", \".png\")), dpi=120)\n    plt.close(fig)\n\n\n",
    );
    let mut any = false;
    for (file, x, ys, group) in RECIPES {
        if csvs.iter().any(|c| c == file) {
            let ys: Vec<String> = ys.iter().map(|y| format!("{y:?}")).collect();
            let group = group.map_or("None".to_string(), |g| format!("{g:?}"));
            writeln!(py, "plot({file:?}, {x:?}, [{}], {group})", ys.join(", "))?;
            any = true;
        }
    }
    if !any {
        bail!(
            "missing data: no recognised CSV files in {}",
            run_dir.display()
        );
    }
    let path = run_dir.join("plots.py");
    std::fs::write(&path, py).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_is_missing_data() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_plots(dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing data"));
    }

    #[test]
    fn script_covers_present_files_only() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("front.csv"),
            "t,measured,formula,relative_error\n",
        )
        .unwrap();
        let path = emit_plots(dir.path()).unwrap();
        let py = std::fs::read_to_string(path).unwrap();
        assert!(py.contains("plot(\"front.csv\""));
        assert!(!py.contains("plot(\"kpz.csv\""));
    }
}
