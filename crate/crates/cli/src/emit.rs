use std::io::Write;

use repel_core::{Geometry, McReport, ObservableSeries, TrajectoryRecord};

use crate::CliError;

/// Writes one row per grid time: `t,x1..xN,S,min_gap`, plus `R` on the
/// circle. Values carry 17 significant digits.
pub fn emit_trajectory_csv(record: &TrajectoryRecord, sink: &mut impl Write) -> Result<(), CliError> {
    if record.is_empty() {
        return Err(CliError::Runtime("cannot write an empty trajectory".into()));
    }
    let series = ObservableSeries::from_record(record, &[])?;
    let n = record.n_particles();
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    header.push_str(",S,min_gap");
    if record.geometry == Geometry::Circle {
        header.push_str(",R");
    }
    writeln!(sink, "{header}")?;
    for (k, (t, xs)) in record.times.iter().zip(&record.positions).enumerate() {
        let mut row = num(*t);
        for x in xs {
            row.push(',');
            row.push_str(&num(*x));
        }
        row.push(',');
        row.push_str(&num(series.s_total[k]));
        row.push(',');
        row.push_str(&num(series.min_gap[k]));
        if let Some(r) = &series.r_circ {
            row.push(',');
            row.push_str(&num(r[k]));
        }
        writeln!(sink, "{row}")?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Any serializable value as one JSON object with sorted keys.
pub fn emit_json<T: serde::Serialize>(value: &T, sink: &mut impl Write) -> Result<(), CliError> {
    // `Value` maps are ordered by key
    let tree = serde_json::to_value(value)?;
    serde_json::to_writer_pretty(&mut *sink, &tree)?;
    writeln!(sink)?;
    Ok(())
}

pub fn emit_report_json(report: &McReport, sink: &mut impl Write) -> Result<(), CliError> {
    emit_json(report, sink)
}

/// Report tests as a table; absent optional fields are empty cells.
pub fn emit_report_csv(report: &McReport, sink: &mut impl Write) -> Result<(), CliError> {
    writeln!(sink, "name,statistic,p_value,mean,se,frequency,threshold,passed")?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for e in &report.tests {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            e.name,
            num(e.statistic),
            opt(e.p_value),
            opt(e.mean),
            opt(e.se),
            opt(e.frequency),
            opt(e.threshold),
            e.passed()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use repel_core::{PlanEcho, Scheme, Seeds, TestEntry};

    fn record(geometry: Geometry, times: Vec<f64>, positions: Vec<Vec<f64>>) -> TrajectoryRecord {
        TrajectoryRecord {
            geometry,
            times,
            positions,
            steps: 0,
            path_min_gap: 0.0,
        }
    }

    fn report(tests: Vec<TestEntry>) -> McReport {
        McReport {
            plan_echo: PlanEcho {
                geometry: Geometry::Line,
                n: 3,
                lambda: 0.5,
                initial_positions: vec![-1.0, 0.0, 1.0],
                scheme: Scheme::TamedEuler,
                dt_max: 1e-4,
                dt_min: 1e-8,
                gap_safety: 0.1,
                taming: true,
                t_end: 0.5,
                grid_points: 1,
                requested_paths: 10,
            },
            seeds: Seeds {
                master_seed: 7,
                first_stream: 0,
                last_stream: 9,
            },
            n_paths: 10,
            tests,
            failures: 0,
        }
    }

    #[test]
    fn single_row_csv() {
        let rec = record(Geometry::Line, vec![0.5], vec![vec![-1.0, 0.0, 1.0]]);
        let mut buf = Vec::new();
        emit_trajectory_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,x1,x2,x3,S,min_gap");
        assert_eq!(lines[1].split(',').count(), 1 + 3 + 2);
        assert!(lines[1].starts_with("5.0000000000000000e-1,-1.0000000000000000e0,"));
        assert!(lines[1].contains(",1.2000000000000000e1,"));
    }

    #[test]
    fn circle_csv_has_r_column() {
        let rec = record(Geometry::Circle, vec![1.0], vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let mut buf = Vec::new();
        emit_trajectory_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2,x3,x4,S,min_gap,R\n"));
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 1 + 4 + 3);
    }

    #[test]
    fn empty_record_rejected() {
        let rec = record(Geometry::Line, vec![], vec![]);
        assert!(emit_trajectory_csv(&rec, &mut Vec::new()).is_err());
    }

    #[test]
    fn json_keys_sorted_and_round_trip() {
        let mut ks = TestEntry::named("bessel_ks", 0.012);
        ks.p_value = Some(0.25);
        let r = report(vec![ks]);
        let mut buf = Vec::new();
        emit_report_json(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys = ["failures", "n_paths", "plan_echo", "seeds", "tests"];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains("\"p_value\": 0.25"));
        assert!(!text.contains("\"mean\""));
        let back: McReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn arbitrary_floats_round_trip() {
        use rand::Rng;
        let mut rng = repel_core::NoiseSource::new(3, 0).rng();
        let entries: Vec<TestEntry> = (0..10_000)
            .map(|_| loop {
                let x = f64::from_bits(rng.random::<u64>());
                if x.is_finite() {
                    let mut e = TestEntry::named("bessel_mean", x);
                    e.mean = Some(rng.random::<f64>() * 1e3);
                    break e;
                }
            })
            .collect();
        let r = report(entries);
        let mut buf = Vec::new();
        emit_report_json(&r, &mut buf).unwrap();
        assert_eq!(serde_json::from_slice::<McReport>(&buf).unwrap(), r);
    }

    #[test]
    fn empty_tests_list() {
        let mut buf = Vec::new();
        emit_report_json(&report(vec![]), &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["tests"], serde_json::json!([]));
    }

    #[test]
    fn report_csv_blank_cells() {
        let mut buf = Vec::new();
        emit_report_csv(&report(vec![TestEntry::named("collision_scan", 0.5)]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "collision_scan,5.0000000000000000e-1,,,,,,true");
    }
}
