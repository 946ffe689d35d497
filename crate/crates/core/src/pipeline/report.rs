use std::fmt::Write as _;
use std::path::Path;

use super::retune::RetuneResult;
use crate::error::Result;
use crate::estimation::{bode, PolyModel};
use crate::numfmt::g17;
use crate::validation::{ComparisonRow, ResidualReport, COMPARISON_COLUMNS};

pub const BODE_POINTS: usize = 200;
pub const BODE_RANGE: (f64, f64) = (0.1, 20.0);

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

fn preamble(config_hash: &str) -> String {
    format!("# config_hash = {config_hash}\n")
}

pub fn comparison_csv(rows: &[ComparisonRow], config_hash: &str) -> String {
    let mut s = preamble(config_hash);
    let _ = writeln!(s, "{}", COMPARISON_COLUMNS.join(","));
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.key,
            g17(r.training_fit),
            g17(r.validation_prbs_fit),
            g17(r.validation_square_fit),
            if r.stage1_pass { "pass" } else { "fail" },
            if r.stage2_pass { "pass" } else { "fail" },
            g17(r.rmse),
            g17(r.mse),
            r.whiteness_pass,
            r.causality_pass,
            g17(r.aic),
            r.key.n_params()
        );
    }
    s
}

pub fn residuals_csv(rep: &ResidualReport, label: &str, config_hash: &str) -> String {
    let mut s = preamble(config_hash);
    let _ = writeln!(s, "# model = {label}");
    let _ = writeln!(s, "# whiteness_pass = {}", rep.whiteness_pass);
    let _ = writeln!(s, "# causality_pass = {}", rep.causality_pass);
    let _ = writeln!(s, "kind,lag,value,bound");
    for (i, v) in rep.autocorr.values.iter().enumerate() {
        let _ = writeln!(s, "autocorr,{},{},{}", i + 1, g17(*v), g17(rep.bound));
    }
    let l = rep.crosscorr.max_lag as i64;
    for (i, v) in rep.crosscorr.values.iter().enumerate() {
        let _ = writeln!(s, "crosscorr,{},{},{}", i as i64 - l, g17(*v), g17(rep.crosscorr.bound));
    }
    s
}

pub fn bode_csv(m: &PolyModel, config_hash: &str) -> Result<String> {
    let pts = bode(m, &log_spaced(BODE_RANGE.0, BODE_RANGE.1, BODE_POINTS))?;
    let mut s = preamble(config_hash);
    let _ = writeln!(s, "omega_rad_s,magnitude_db,phase_deg");
    for p in pts {
        let _ = writeln!(s, "{},{},{}", g17(p.omega), g17(p.magnitude_db), g17(p.phase_deg));
    }
    Ok(s)
}

pub fn retune_csv(r: &RetuneResult, config_hash: &str) -> String {
    let mut s = preamble(config_hash);
    let gains = |c: &crate::control::CascadeConfig| {
        format!("outer_kp={} inner_kp={} inner_ki={} inner_kd={}", g17(c.outer.kp), g17(c.inner.kp), g17(c.inner.ki), g17(c.inner.kd))
    };
    let _ = writeln!(s, "# baseline = {} cost={}", gains(&r.baseline), g17(r.baseline_cost.total));
    let _ = writeln!(s, "# tuned = {} cost={}", gains(&r.tuned), g17(r.tuned_cost.total));
    match &r.lqr {
        Ok(l) => {
            let k: Vec<String> = l.gain.iter().map(|v| g17(*v)).collect();
            let _ = writeln!(s, "# lqr_gain = {}", k.join(" "));
            let _ = writeln!(s, "# lqr_riccati_residual = {}", g17(l.lqr.residual));
            let _ = writeln!(s, "# lqr_spectral_radius = {}", g17(l.lqr.spectral_radius));
            let _ = writeln!(s, "# lqr_cost = {}", g17(l.cost.total));
        }
        Err(e) => {
            let _ = writeln!(s, "# lqr_error = {e}");
        }
    }
    let _ = writeln!(s, "t,r,angle_baseline,angle_tuned,angle_lqr,u_baseline,u_tuned,u_lqr");
    let lqr = r.lqr.as_ref().ok().map(|l| &l.trace);
    for k in 0..r.tuned_trace.len() {
        let (al, ul) = lqr.map(|t| (t.y_angle[k], t.u[k])).unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            g17(r.tuned_trace.t[k]),
            g17(r.tuned_trace.r[k]),
            g17(r.baseline_trace.y_angle[k]),
            g17(r.tuned_trace.y_angle[k]),
            g17(al),
            g17(r.baseline_trace.u[k]),
            g17(r.tuned_trace.u[k]),
            g17(ul)
        );
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_band() {
        let w = log_spaced(0.1, 20.0, 200);
        assert_eq!(w.len(), 200);
        assert!((w[0] - 0.1).abs() < 1e-15);
        assert_eq!(*w.last().unwrap(), 20.0);
        assert!(w.windows(2).all(|p| p[1] > p[0]));
        let ratios: Vec<f64> = w.windows(2).map(|p| p[1] / p[0]).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-9));
    }

    #[test]
    fn bode_file_shape() {
        let m = PolyModel::from_polynomials(&[1.0, -0.9], &[0.0, 0.1], 0.004).unwrap();
        let csv = bode_csv(&m, "abc").unwrap();
        assert!(csv.starts_with("# config_hash = abc\n"));
        assert_eq!(csv.lines().count(), 2 + BODE_POINTS);
    }
}
