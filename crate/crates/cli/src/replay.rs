//! Independent re-simulation of a stored control run.

use std::path::Path;

use cascade_core::dynamics::{energy, parse_signal_csv, solve, SolveOptions};
use cascade_core::hum::SeedSpace;

use crate::commands::{control_template, read_initial, read_report, Outcome, Verdict};
use crate::config::parse_config;
use crate::output::{CONFIG, CONTROL};
use crate::CliError;

pub const REPLAY_RTOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REPLAY_RTOL * a.abs().max(b.abs())
}

pub fn replay(dir: &Path) -> Result<Outcome, CliError> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))
    };
    let loaded = parse_config(&read(CONFIG)?)?;
    let report = read_report(dir)?;
    let Some(record) = report.replay.clone() else {
        return Err(CliError::Io("report holds no replayable control".into()));
    };
    let sys = loaded.config.build_system()?;
    let resolved = loaded.config.resolve(&sys)?;
    let time = resolved.time;
    let initial = read_initial(dir)?;
    let control = parse_signal_csv(&read(CONTROL)?, &control_template(&sys, &time))?;
    let terminal = solve(&sys, &initial, Some(&control), &time, &SolveOptions::default())?.terminal;
    let e = energy(&sys, &terminal)?;
    let filtered = SeedSpace::new(&sys, record.k_filter)?.filtered_energy(&terminal);

    let mut mismatches = Vec::new();
    if !close(e.total, record.terminal_energy_full) {
        mismatches.push(format!(
            "full terminal energy {:.16e} vs stored {:.16e}",
            e.total, record.terminal_energy_full
        ));
    }
    if !close(filtered, record.terminal_energy_filtered) {
        mismatches.push(format!(
            "filtered terminal energy {:.16e} vs stored {:.16e}",
            filtered, record.terminal_energy_filtered
        ));
    }
    if e.per_component.len() != record.terminal_energy_per_component.len()
        || e
            .per_component
            .iter()
            .zip(&record.terminal_energy_per_component)
            .any(|(a, b)| !close(*a, *b))
    {
        mismatches.push(format!(
            "per-component terminal energies {:?} vs stored {:?}",
            e.per_component, record.terminal_energy_per_component
        ));
    }
    let verdict = if mismatches.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let summary = if mismatches.is_empty() {
        format!(
            "replay: PASS (terminal energy {:.6e}, filtered {:.6e}, within {REPLAY_RTOL:e} relative)",
            e.total, filtered
        )
    } else {
        format!("replay: FAIL ({})", mismatches.join("; "))
    };
    Ok(Outcome {
        verdict,
        summary,
        report: None,
        out_dir: None,
    })
}
