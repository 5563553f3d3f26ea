//! Per-run episode traces and the aggregated summary table.

use std::io::{Read, Write};

use crate::emulator::{DistributionKind, KpiKind};
use crate::error::{Error, Result};
use crate::metrics::{convergence_time, iae, oscillation_amplitude, KpiSeries, DEFAULT_TOLERANCE};

use super::Approach;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub kpi: Vec<f64>,
    pub goals: Vec<f64>,
    pub knobs: Vec<f64>,
    pub reward: f64,
    pub active: [bool; 2],
    pub distribution: DistributionKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub approach: Approach,
    pub seed: u64,
    pub services: Vec<String>,
    pub kinds: Vec<KpiKind>,
    pub targets: Vec<f64>,
    pub agents: Vec<String>,
    pub rows: Vec<TraceRow>,
}

/// Metrics of one KPI in one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KpiMetrics {
    pub iae: Option<f64>,
    pub convergence: Option<usize>,
    pub oscillation: f64,
}

impl EpisodeTrace {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.services.iter().map(|s| format!("kpi_{s}")));
        h.extend(self.agents.iter().map(|a| format!("goal_{a}")));
        h.extend(self.agents.iter().map(|a| format!("knob_{a}")));
        h.extend(["reward", "active_priority", "active_mbr", "dist_kind"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = vec![row.t.to_string()];
            rec.extend(row.kpi.iter().map(f64::to_string));
            rec.extend(row.goals.iter().map(f64::to_string));
            rec.extend(row.knobs.iter().map(f64::to_string));
            rec.push(row.reward.to_string());
            rec.extend(row.active.iter().map(|a| u8::from(*a).to_string()));
            rec.push(row.distribution.to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a CSV written by [`EpisodeTrace::write_csv`]. Targets and
    /// directions are not stored in the file, so the caller supplies them.
    pub fn read_csv<R: Read>(
        input: R,
        approach: Approach,
        seed: u64,
        kinds: Vec<KpiKind>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let strip = |prefix: &str| -> Vec<String> {
            header.iter().filter_map(|h| h.strip_prefix(prefix).map(String::from)).collect()
        };
        let services = strip("kpi_");
        let agents = strip("goal_");
        let (k, a) = (services.len(), agents.len());
        if k != kinds.len() || k != targets.len() {
            return Err(Error::shape("trace KPI columns", kinds.len(), k));
        }
        if header.len() != 1 + k + 2 * a + 4 {
            return Err(Error::shape("trace columns", 1 + k + 2 * a + 4, header.len()));
        }
        let num = |field: &str| -> Result<f64> {
            field.parse().map_err(|_| Error::shape("trace field", "a number", field))
        };
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f: Vec<&str> = rec.iter().collect();
            let flag = |field: &str| -> Result<bool> {
                match field {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::shape("active flag", "0 or 1", other)),
                }
            };
            let dist = f[1 + k + 2 * a + 3];
            rows.push(TraceRow {
                t: f[0].parse().map_err(|_| Error::shape("trace step", "an integer", f[0]))?,
                kpi: f[1..1 + k].iter().map(|x| num(x)).collect::<Result<_>>()?,
                goals: f[1 + k..1 + k + a].iter().map(|x| num(x)).collect::<Result<_>>()?,
                knobs: f[1 + k + a..1 + k + 2 * a].iter().map(|x| num(x)).collect::<Result<_>>()?,
                reward: num(f[1 + k + 2 * a])?,
                active: [flag(f[2 + k + 2 * a])?, flag(f[3 + k + 2 * a])?],
                distribution: DistributionKind::parse(dist)
                    .ok_or_else(|| Error::shape("distribution", "uniform, gaussian or gamma", dist))?,
            });
        }
        Ok(EpisodeTrace {
            approach,
            seed,
            services,
            kinds,
            targets,
            agents,
            rows,
        })
    }

    pub fn series(&self, k: usize) -> Result<KpiSeries> {
        KpiSeries::new(
            self.rows.iter().map(|r| r.kpi[k]).collect(),
            self.targets[k],
            self.kinds[k].into(),
        )
    }

    /// IAE, convergence time and oscillation from `oscillation_from` on, per KPI.
    pub fn metrics(&self, oscillation_from: usize) -> Result<Vec<KpiMetrics>> {
        (0..self.services.len())
            .map(|k| {
                let s = self.series(k)?;
                Ok(KpiMetrics {
                    iae: iae(&s),
                    convergence: convergence_time(&s, DEFAULT_TOLERANCE),
                    oscillation: oscillation_amplitude(&s, oscillation_from.min(self.rows.len() - 1))?,
                })
            })
            .collect()
    }
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub approach: Approach,
    pub kpi: String,
    /// Mean and population standard deviation over seeds; `None` if any seed never reached the band.
    pub iae_mean: Option<f64>,
    pub iae_std: Option<f64>,
    /// `None` if any seed never settled.
    pub conv_time_mean: Option<f64>,
    pub oscillation_mean: f64,
    pub seeds: usize,
}

pub const SUMMARY_HEADER: [&str; 6] = ["approach", "kpi", "iae_mean", "iae_std", "conv_time_mean", "oscillation_mean"];
pub const NOT_REACHED: &str = "not_reached";

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates traces into one row per (approach, KPI), sorted by KPI then approach.
pub fn summarize(traces: &[EpisodeTrace], oscillation_from: usize) -> Result<Vec<SummaryRow>> {
    let mut groups: Vec<(Approach, Vec<&EpisodeTrace>)> = Vec::new();
    for tr in traces {
        match groups.iter_mut().find(|(a, _)| *a == tr.approach) {
            Some((_, v)) => v.push(tr),
            None => groups.push((tr.approach, vec![tr])),
        }
    }
    let mut rows = Vec::new();
    for (approach, runs) in groups {
        let per_run: Vec<Vec<KpiMetrics>> = runs.iter().map(|r| r.metrics(oscillation_from)).collect::<Result<_>>()?;
        for (k, name) in runs[0].services.iter().enumerate() {
            let iaes: Option<Vec<f64>> = per_run.iter().map(|m| m[k].iae).collect();
            let convs: Option<Vec<f64>> = per_run.iter().map(|m| m[k].convergence.map(|c| c as f64)).collect();
            let osc: Vec<f64> = per_run.iter().map(|m| m[k].oscillation).collect();
            let (iae_mean, iae_std) = match iaes {
                Some(v) => {
                    let (m, s) = mean_std(&v);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            rows.push(SummaryRow {
                approach,
                kpi: name.clone(),
                iae_mean,
                iae_std,
                conv_time_mean: convs.map(|v| mean_std(&v).0),
                oscillation_mean: mean_std(&osc).0,
                seeds: runs.len(),
            });
        }
    }
    rows.sort_by(|a, b| (a.kpi.as_str(), a.approach.name()).cmp(&(b.kpi.as_str(), b.approach.name())));
    Ok(rows)
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(|| NOT_REACHED.to_string(), |x| x.to_string());
    for r in rows {
        w.write_record([
            r.approach.name().to_string(),
            r.kpi.clone(),
            opt(r.iae_mean),
            opt(r.iae_std),
            opt(r.conv_time_mean),
            r.oscillation_mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Python script that plots every trace CSV in its directory.
pub fn plot_script() -> &'static str {
    r#"#!/usr/bin/env python3
"""Plot KPI trajectories from the trace CSVs next to this script.

Usage: python3 plot_traces.py [trace.csv ...]
Writes one PNG per KPI with every approach overlaid (first seed only).
"""
import csv
import glob
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def main():
    paths = sys.argv[1:] or sorted(glob.glob(os.path.join(HERE, "trace_*.csv")))
    if not paths:
        sys.exit("no trace CSVs found")
    runs = {}
    for p in paths:
        name = os.path.basename(p)[len("trace_"):-len(".csv")]
        approach, _, seed = name.rpartition("_seed")
        runs.setdefault(approach, (seed, load(p)))
    kpis = [c for c in next(iter(runs.values()))[1][0].keys() if c.startswith("kpi_")]
    for kpi in kpis:
        fig, ax = plt.subplots(figsize=(7, 4))
        for approach, (seed, rows) in sorted(runs.items()):
            t = [int(r["t"]) for r in rows]
            ax.plot(t, [float(r[kpi]) for r in rows], label=f"{approach} (seed {seed})")
        rows = next(iter(runs.values()))[1]
        for i in range(1, len(rows)):
            if rows[i]["dist_kind"] != rows[i - 1]["dist_kind"]:
                ax.axvline(i, color="grey", linestyle=":", linewidth=1)
        ax.set_xlabel("timestep")
        ax.set_ylabel(kpi[len("kpi_"):])
        ax.legend(fontsize="small")
        fig.tight_layout()
        out = os.path.join(os.path.dirname(paths[0]), f"{kpi}.png")
        fig.savefig(out, dpi=120)
        print("wrote", out)


if __name__ == "__main__":
    main()
"#
}
