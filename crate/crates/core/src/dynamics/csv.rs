//! CSV export of snapshots and sampled signals.
//!
//! Columns: `t,component,index,value_re,value_im`; components are 1-based,
//! wave snapshots export the position field.

use std::fmt::Write;

use num_complex::Complex64;

use super::system::{ControlSignal, SystemState};
use crate::error::{invalid, Result};

pub const CSV_HEADER: &str = "t,component,index,value_re,value_im";

fn row(out: &mut String, t: f64, component: usize, index: usize, z: Complex64) {
    let _ = writeln!(
        out,
        "{:.16e},{},{},{:.16e},{:.16e}",
        t,
        component + 1,
        index,
        z.re,
        z.im
    );
}

pub fn trajectory_csv(snapshots: &[SystemState]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for s in snapshots {
        match s {
            SystemState::Wave(w) => {
                for (c, f) in w.position.iter().enumerate() {
                    for (k, x) in f.iter().enumerate() {
                        row(&mut out, w.t, c, k, Complex64::new(*x, 0.0));
                    }
                }
            }
            SystemState::Diffusion(d) => {
                for (c, f) in d.values.iter().enumerate() {
                    for (k, z) in f.iter().enumerate() {
                        row(&mut out, d.t, c, k, *z);
                    }
                }
            }
        }
    }
    out
}

pub fn signal_csv(signal: &ControlSignal) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for m in 0..signal.time.samples() {
        let t = signal.time.time(m);
        for ch in &signal.channels {
            for (k, z) in ch.sample(m).iter().enumerate() {
                row(&mut out, t, ch.component, k, *z);
            }
        }
    }
    out
}

/// Reads values written by [`signal_csv`] into a signal with the layout of
/// `template`. Every sample must be present exactly once.
pub fn parse_signal_csv(text: &str, template: &ControlSignal) -> Result<ControlSignal> {
    let mut out = template.clone();
    let mut seen: Vec<Vec<bool>> = out
        .channels
        .iter()
        .map(|c| vec![false; c.values.len()])
        .collect();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return invalid("control CSV has an unexpected header"),
    }
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || invalid(format!("control CSV line {} is malformed", ln + 2));
        if cols.len() != 5 {
            return bad();
        }
        let (Ok(t), Ok(comp), Ok(idx), Ok(re), Ok(im)) = (
            cols[0].trim().parse::<f64>(),
            cols[1].trim().parse::<usize>(),
            cols[2].trim().parse::<usize>(),
            cols[3].trim().parse::<f64>(),
            cols[4].trim().parse::<f64>(),
        ) else {
            return bad();
        };
        let m = (t / out.time.dt).round();
        if !(m >= 0.0 && (m as usize) < out.time.samples()) || (t - m * out.time.dt).abs() > 1e-9 {
            return invalid(format!("control CSV line {} is off the time grid", ln + 2));
        }
        let m = m as usize;
        let Some(ci) = out.channels.iter().position(|c| c.component + 1 == comp) else {
            return invalid(format!("control CSV names uncontrolled component {comp}"));
        };
        let ch = &mut out.channels[ci];
        if idx >= ch.width {
            return bad();
        }
        let pos = m * ch.width + idx;
        if seen[ci][pos] {
            return invalid(format!("control CSV repeats a sample on line {}", ln + 2));
        }
        seen[ci][pos] = true;
        ch.values[pos] = Complex64::new(re, im);
    }
    if seen.iter().flatten().any(|s| !s) {
        return invalid("control CSV is missing samples");
    }
    Ok(out)
}
