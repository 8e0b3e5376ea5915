//! CSV emitters. Column sets are stable; floats use Rust's shortest
//! round-trip formatting so equal inputs give byte-identical files.

use std::io::Write;

use super::{ErasureReport, RoutingRow, SimError, SimReport};
use crate::analysis::{self, AnalysisParams, MinStorage, FpRow};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `N, P_FP, log10 P_FP`. The linear column is rendered from the logarithm,
/// so rows below the `f64` range keep their value.
pub fn write_fp_table<W: Write>(w: W, rows: &[FpRow]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "p_fp", "log10_p_fp"])?;
    for r in rows {
        out.write_record([r.keys.to_string(), r.fp.scientific(6), format!("{:.6}", r.fp.log10)])?;
    }
    out.flush()?;
    Ok(())
}

/// `p_fp, F_min, F_min/2^21`.
pub fn write_min_storage<W: Write>(w: W, rows: &[(f64, MinStorage)]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p_fp", "f_min_bits", "f_min_files"])?;
    for (p, m) in rows {
        out.write_record([format!("{p:e}"), format!("{:.1}", m.bits), format!("{:.4}", m.file_units)])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-user access counts. `total_lookups` counts repeated visits to the
/// same partition; the expected columns come from the balls-into-bins model.
pub fn write_access<W: Write>(w: W, report: &SimReport) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "replicate",
        "username",
        "unique_files",
        "total_lookups",
        "candidates",
        "expected_unique_uniform",
        "expected_unique_cells",
    ])?;
    for u in &report.users {
        out.write_record([
            u.replicate.to_string(),
            u.username.clone(),
            u.unique_files.to_string(),
            u.total_lookups.to_string(),
            u.candidates.to_string(),
            format!("{:.4}", u.expected_unique_uniform),
            format!("{:.4}", u.expected_unique_cells),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row of run-level figures: false-positive measurement against the
/// closed form, and the bit census.
pub fn write_summary<W: Write>(w: W, report: &SimReport) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    let (lo, hi) = report.fp.interval_3sigma();
    out.write_record([
        "seed",
        "replicates",
        "population",
        "probes",
        "false_positives",
        "fp_rate",
        "fp_ci3_low",
        "fp_ci3_high",
        "closed_form_p_fp",
        "closed_form_log10",
        "z_vs_closed_form",
        "conditional_p_fp",
        "nonempty_retrieval_rate",
        "popcount",
        "total_bits",
        "alpha",
        "mean_unique_files",
    ])?;
    out.write_record([
        report.config.seed.to_string(),
        report.config.replicates.to_string(),
        report.config.population.to_string(),
        report.fp.probes.to_string(),
        report.fp.false_positives.to_string(),
        report.fp.rate().to_string(),
        lo.to_string(),
        hi.to_string(),
        report.closed_form.scientific(6),
        report.closed_form.log10.to_string(),
        report.fp.z_score(report.closed_form.value).to_string(),
        format!("{:e}", report.conditional_fp),
        report.fp.nonempty_rate().to_string(),
        report.popcount.to_string(),
        report.total_bits.to_string(),
        report.alpha().to_string(),
        report.mean_unique_files().to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_erasure<W: Write>(w: W, report: &ErasureReport) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "fraction",
        "erased_files",
        "retrievals",
        "recovered",
        "exhausted",
        "exhausted_members",
        "recall",
        "inflation",
        "lookups",
        "wildcarded",
        "degenerate",
    ])?;
    for r in &report.rows {
        out.write_record([
            r.fraction.to_string(),
            r.erased_files.to_string(),
            r.retrievals.to_string(),
            r.recovered.to_string(),
            r.exhausted.to_string(),
            r.exhausted_members.to_string(),
            opt(r.recall()),
            opt(r.inflation()),
            r.lookups.to_string(),
            r.wildcarded.to_string(),
            r.degenerate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_routing<W: Write>(w: W, rows: &[RoutingRow]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["file", "address", "cell_fraction", "lookups"])?;
    for r in rows {
        out.write_record([r.file.0.to_string(), r.address.to_hex(), r.cell.to_string(), r.lookups.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Plot series: `log10 P_FP` against `N` on an even grid.
pub fn write_fp_curve<W: Write>(w: W, base: &AnalysisParams, n_max: u64, steps: u64) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "log10_p_fp"])?;
    for i in 1..=steps {
        let n = n_max * i / steps;
        let fp = analysis::fp_probability(&AnalysisParams { keys: n, ..*base })
            .map_err(|e| SimError::Config(e.to_string()))?;
        out.write_record([n.to_string(), format!("{:.6}", fp.log10)])?;
    }
    out.flush()?;
    Ok(())
}
