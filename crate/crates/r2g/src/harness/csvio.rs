//! CSV artifact schemas. All floats are printed with 17 significant digits,
//! which round-trips f64 exactly, so byte-identical files mean numerically
//! identical runs.

use std::fs;
use std::path::Path;

use crate::verify::TrajectoryLog;

use super::HarnessError;

/// 17-significant-digit scientific formatting (round-trip exact for f64).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// trajectory.csv: (epoch, agent_id, action_dim, most_likely_action).
pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut out = String::from("epoch,agent_id,action_dim,most_likely_action\n");
    for (epoch, joint) in log.entries.iter().enumerate() {
        for (agent, dims) in joint.iter().enumerate() {
            for (dim, value) in dims.iter().enumerate() {
                out.push_str(&format!("{epoch},{agent},{dim},{}\n", fmt_float(*value)));
            }
        }
    }
    out
}

/// returns.csv: (epoch, agent_id, mean_return).
pub fn returns_csv(returns: &[Vec<f64>]) -> String {
    let mut out = String::from("epoch,agent_id,mean_return\n");
    for (epoch, per_agent) in returns.iter().enumerate() {
        for (agent, value) in per_agent.iter().enumerate() {
            out.push_str(&format!("{epoch},{agent},{}\n", fmt_float(*value)));
        }
    }
    out
}

/// response_map.csv: (opponent_action, agent_id, response).
pub fn response_map_csv(rows: &[(f64, usize, f64)]) -> String {
    let mut out = String::from("opponent_action,agent_id,response\n");
    for (opp, agent, response) in rows {
        out.push_str(&format!("{},{agent},{}\n", fmt_float(*opp), fmt_float(*response)));
    }
    out
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryLog, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut log = TrajectoryLog::default();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(HarnessError::Config(format!(
                "{}:{}: expected 4 fields",
                path.display(),
                lineno + 1
            )));
        }
        let bad = |what: &str| {
            HarnessError::Config(format!("{}:{}: bad {what}", path.display(), lineno + 1))
        };
        let epoch: usize = fields[0].parse().map_err(|_| bad("epoch"))?;
        let agent: usize = fields[1].parse().map_err(|_| bad("agent_id"))?;
        let dim: usize = fields[2].parse().map_err(|_| bad("action_dim"))?;
        let value: f64 = fields[3].parse().map_err(|_| bad("action value"))?;
        while log.entries.len() <= epoch {
            log.entries.push(Vec::new());
        }
        let joint = &mut log.entries[epoch];
        while joint.len() <= agent {
            joint.push(Vec::new());
        }
        while joint[agent].len() <= dim {
            joint[agent].push(f64::NAN);
        }
        joint[agent][dim] = value;
    }
    Ok(log)
}

/// returns.csv back into per-epoch per-agent means.
pub fn read_returns_csv(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let epoch: usize = fields[0].parse().map_err(|_| HarnessError::Config("bad epoch".into()))?;
        let agent: usize = fields[1].parse().map_err(|_| HarnessError::Config("bad agent".into()))?;
        let value: f64 = fields[2].parse().map_err(|_| HarnessError::Config("bad value".into()))?;
        while rows.len() <= epoch {
            rows.push(Vec::new());
        }
        while rows[epoch].len() <= agent {
            rows[epoch].push(f64::NAN);
        }
        rows[epoch][agent] = value;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_formatting_round_trips_interesting_values() {
        for v in [0.0, -0.0, 1.0, 0.99, 1e-300, -2.5e17, std::f64::consts::PI] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn trajectory_csv_round_trips_through_files() {
        let mut log = TrajectoryLog::default();
        log.push(vec![vec![0.1], vec![-0.9]]);
        log.push(vec![vec![0.30000000000000004], vec![0.5]]);
        let dir = std::env::temp_dir().join(format!("r2g-csv-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trajectory.csv");
        std::fs::write(&path, trajectory_csv(&log)).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back, log);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        #[test]
        fn float_formatting_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = fmt_float(v).parse().unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits());
        }
    }
}
