//! Study configuration files, run manifests and the CSV / JSON / plot-script
//! outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::{SeedEntry, StudyConfig, Table};
use crate::{Error, Result};

/// Parse and resolve a JSON study configuration. Unknown keys and schema
/// violations are reported with the offending key.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let cfg: StudyConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.resolve()
}

pub fn load_config(path: &Path) -> Result<StudyConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Content hash in the style of a git blob id, over `"blob <len>\0" + bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of one run. The resolved config is echoed in full, so a run can
/// be repeated from the manifest alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub input_hash: Option<String>,
    pub seeds: Vec<SeedEntry>,
    pub config: StudyConfig,
    pub dry_run: bool,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    /// `input` is the raw configuration file, if the run had one.
    pub fn begin(command: &str, config: &StudyConfig, input: Option<&[u8]>) -> Result<Self> {
        let resolved = serde_json::to_vec(config)?;
        Ok(Self {
            tool: "convlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: sha256_hex(&resolved),
            input_hash: input.map(content_hash),
            seeds: Vec::new(),
            config: config.clone(),
            dry_run: false,
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            outputs: Vec::new(),
        })
    }

    /// Write `bytes` under `dir` and record its hash.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(OutputEntry {
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// CSV, full JSON report and plot script for one table.
    pub fn write_study<R: Serialize>(
        &mut self,
        dir: &Path,
        stem: &str,
        table: &Table,
        report: &R,
    ) -> Result<()> {
        let csv = format!("{stem}.csv");
        self.write_output(dir, &csv, table.to_csv().as_bytes())?;
        self.write_output(
            dir,
            &format!("{stem}.json"),
            &serde_json::to_vec_pretty(report)?,
        )?;
        self.write_output(
            dir,
            &format!("{stem}_plot.py"),
            plot_script(&csv, table.key).as_bytes(),
        )?;
        Ok(())
    }

    /// Stamp the end time and write the manifest as `name` under `dir`; it is
    /// not listed among its own outputs.
    pub fn finish(&mut self, dir: &Path, name: &str) -> Result<PathBuf> {
        self.finished_unix_s = unix_now();
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Outputs whose current contents under `dir` differ from the recorded hash.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| {
                fs::read(dir.join(&o.path))
                    .map(|b| sha256_hex(&b) != o.sha256)
                    .unwrap_or(true)
            })
            .map(|o| o.path.clone())
            .collect()
    }
}

/// A standalone matplotlib script that plots every metric of `csv` against
/// the key column on log-log axes with 3 sigma error bars.
pub fn plot_script(csv: &str, key: &str) -> String {
    format!(
        r#"# Plot {csv}: estimate against {key}, one series per metric.
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
series = defaultdict(list)
with open(path) as f:
    for row in csv.DictReader(f):
        series[row["metric"]].append(
            (float(row["{key}"]), float(row["estimate"]), float(row["halfwidth3s"]))
        )

fig, ax = plt.subplots()
for metric, pts in sorted(series.items()):
    pts = [p for p in pts if p[0] > 0 and p[1] > 0]
    if not pts:
        continue
    x, y, e = zip(*pts)
    ax.errorbar(x, y, yerr=e, marker="o", capsize=3, label=metric)
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("{key}")
ax.set_ylabel("estimate")
ax.legend(fontsize="small")
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"system":"toy","toy":{"m1":4,"m2":4,"n_forced":4,"ra":1.0},"eps_grid":[0.1,0.01]}"#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.t, 1.0);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.dt, Some(1e-3));
        assert_eq!(cfg.metric.eta, 0.1);
        assert_eq!(cfg.out_dir, "out");
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_config(r#"{"system":"toy","epz_grid":[0.1]}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("epz_grid"), "{e}");
        let e = parse_config(r#"{"system":"spde","spde":{"nx":32,"nzz":33}}"#).unwrap_err();
        assert!(e.to_string().contains("nzz"), "{e}");
    }

    #[test]
    fn hashes() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        // sha256 of "blob 0\0", the empty blob id of a sha256 git repository.
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn manifest_records_outputs_and_round_trips() {
        let dir = std::env::temp_dir().join(format!("convlab-report-{}", std::process::id()));
        let cfg = parse_config(MINIMAL).unwrap();
        let mut m = RunManifest::begin("toy-converge", &cfg, Some(MINIMAL.as_bytes())).unwrap();
        let table = Table {
            key: "eps",
            rows: Vec::new(),
        };
        m.write_study(&dir, "toy", &table, &vec![1, 2]).unwrap();
        assert_eq!(m.outputs.len(), 3);
        let path = m.finish(&dir, "toy_manifest.json").unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert!(back.mismatches(&dir).is_empty());
        fs::write(dir.join("toy.csv"), "changed").unwrap();
        assert_eq!(back.mismatches(&dir), vec!["toy.csv".to_string()]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn plot_script_reads_the_key_column() {
        let s = plot_script("x.csv", "n_proj");
        assert!(s.contains(r#"row["n_proj"]"#) && s.contains("x.csv"));
    }
}
