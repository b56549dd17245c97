//! Aggregation of imitation run directories into mean/std curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const RUN_FILE: &str = "run.txt";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const POLICY_FILE: &str = "policy.bin";

/// The aggregated columns; runs lacking one of them are rejected.
const CURVE_COLUMNS: [&str; 2] = ["mean_return", "exact_kl"];

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub dir: PathBuf,
    pub env_id: String,
    pub algorithm: String,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Run {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let unreadable = |what: &str| CliError::Io(format!("unreadable run {}: {what}", dir.display()));
        let meta = fs::read_to_string(dir.join(RUN_FILE)).map_err(|e| unreadable(&e.to_string()))?;
        let meta: BTreeMap<&str, &str> = meta
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let field = |k: &str| {
            meta.get(k)
                .map(|v| v.to_string())
                .ok_or_else(|| unreadable(&format!("no `{k}` in run.txt")))
        };
        let seed = field("seed")?.parse().map_err(|_| unreadable("bad seed"))?;
        let csv = fs::read_to_string(dir.join(DIAGNOSTICS_FILE)).map_err(|e| unreadable(&e.to_string()))?;
        let mut lines = csv.lines();
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| unreadable("empty diagnostics"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .map(|l| {
                let row: Vec<f64> = l.split(',').map(|x| x.parse::<f64>()).collect::<Result<_, _>>().ok()?;
                (row.len() == columns.len()).then_some(row)
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| unreadable("malformed diagnostics row"))?;
        if rows.is_empty() {
            return Err(unreadable("no diagnostics rows"));
        }
        for c in ["iter"].iter().chain(&CURVE_COLUMNS) {
            if !columns.iter().any(|x| x == c) {
                return Err(unreadable(&format!("diagnostics lack `{c}`")));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            env_id: field("env_id")?,
            algorithm: field("algorithm")?,
            seed,
            columns,
            rows,
        })
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let j = self.columns.iter().position(|c| c == name).expect("checked on load");
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// A run directory, or a directory whose `seed-*` children are runs.
pub fn collect_runs(paths: &[PathBuf]) -> Result<Vec<Run>, CliError> {
    let mut runs = Vec::new();
    for path in paths {
        if path.join(RUN_FILE).exists() {
            runs.push(Run::load(path)?);
            continue;
        }
        let entries =
            fs::read_dir(path).map_err(|e| CliError::Io(format!("unreadable run {}: {e}", path.display())))?;
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(RUN_FILE).exists())
            .collect();
        if children.is_empty() {
            return Err(CliError::Io(format!("unreadable run {}: no run.txt", path.display())));
        }
        children.sort();
        for c in children {
            runs.push(Run::load(&c)?);
        }
    }
    Ok(runs)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub struct Report {
    pub curves: String,
    pub summary: String,
}

/// Per-algorithm mean and population std of each curve column at every
/// logging interval the runs share.
pub fn build_report(runs: &[Run]) -> Result<Report, CliError> {
    let Some(first) = runs.first() else {
        return Err(CliError::Config("no runs given".into()));
    };
    if let Some(other) = runs.iter().find(|r| r.env_id != first.env_id) {
        return Err(CliError::Config(format!(
            "incompatible runs: {} has env {} but {} has env {}",
            first.dir.display(),
            first.env_id,
            other.dir.display(),
            other.env_id
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.algorithm.as_str()).or_default().push(r);
    }
    let mut curves = String::from("algorithm,iter,runs");
    for c in CURVE_COLUMNS {
        write!(curves, ",{c}_mean,{c}_std").unwrap();
    }
    curves.push('\n');
    let mut summary =
        String::from("algorithm,runs,final_return_mean,final_return_std,final_return_median,final_kl_median\n");
    for (alg, mut group) in groups {
        group.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.dir.cmp(&b.dir)));
        let iters = group[0].column("iter");
        let len = group.iter().map(|r| r.rows.len()).min().unwrap_or(0);
        if group.iter().any(|r| r.column("iter")[..len] != iters[..len]) {
            return Err(CliError::Config(format!(
                "incompatible runs: {alg} runs log at different iterations"
            )));
        }
        let cols: Vec<Vec<Vec<f64>>> = CURVE_COLUMNS
            .iter()
            .map(|c| group.iter().map(|r| r.column(c)).collect())
            .collect();
        for (i, iter) in iters.iter().enumerate().take(len) {
            write!(curves, "{alg},{iter},{}", group.len()).unwrap();
            for per_run in &cols {
                let xs: Vec<f64> = per_run.iter().map(|c| c[i]).collect();
                let (m, s) = mean_std(&xs);
                write!(curves, ",{m},{s}").unwrap();
            }
            curves.push('\n');
        }
        let finals: Vec<f64> = cols[0].iter().map(|c| *c.last().unwrap()).collect();
        let kls: Vec<f64> = cols[1].iter().map(|c| *c.last().unwrap()).collect();
        let (m, s) = mean_std(&finals);
        writeln!(
            summary,
            "{alg},{},{m},{s},{},{}",
            group.len(),
            median(&finals),
            median(&kls)
        )
        .unwrap();
    }
    Ok(Report { curves, summary })
}
