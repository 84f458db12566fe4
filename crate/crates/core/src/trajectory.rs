//! Time series of loss and mode strengths, with a shared CSV format:
//! `epoch,loss,source,run_id,<mode columns...>`. Mode columns are named
//! `path<p>_mode<a>`; cells a trajectory does not track are left empty.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub source: String,
    pub run_id: String,
    pub epochs: Vec<f64>,
    pub loss: Vec<f64>,
    pub mode_names: Vec<String>,
    /// `modes[k][m]` is mode `m` at record `k`.
    pub modes: Vec<Vec<f64>>,
    /// Weight snapshots `(epoch, one matrix per edge or layer)`.
    pub snapshots: Vec<(usize, Vec<Matrix>)>,
    /// Network outputs `(epoch, p x N)` at requested epochs.
    pub outputs: Vec<(usize, Matrix)>,
}

impl Trajectory {
    pub fn new(source: &str, run_id: &str) -> Trajectory {
        Trajectory { source: source.to_string(), run_id: run_id.to_string(), ..Default::default() }
    }

    pub fn with_modes(source: &str, run_id: &str, mode_names: Vec<String>) -> Trajectory {
        Trajectory { mode_names, ..Trajectory::new(source, run_id) }
    }

    pub fn push(&mut self, epoch: f64, loss: f64, modes: Vec<f64>) {
        debug_assert_eq!(modes.len(), self.mode_names.len());
        self.epochs.push(epoch);
        self.loss.push(loss);
        self.modes.push(modes);
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss.last().copied()
    }

    pub fn mode_index(&self, name: &str) -> Option<usize> {
        self.mode_names.iter().position(|n| n == name)
    }

    pub fn mode_series(&self, m: usize) -> Vec<f64> {
        self.modes.iter().map(|r| r[m]).collect()
    }

    pub fn output_at(&self, epoch: usize) -> Option<&Matrix> {
        self.outputs.iter().find(|(e, _)| *e == epoch).map(|(_, m)| m)
    }

    /// Loss at an arbitrary time by linear interpolation (clamped at the ends).
    pub fn loss_at(&self, t: f64) -> Option<f64> {
        interpolate(&self.epochs, &self.loss, t)
    }
}

pub fn mode_name(path: usize, mode: usize) -> String {
    format!("path{path}_mode{mode}")
}

/// Piecewise-linear interpolation on an increasing grid, clamped at the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], t: f64) -> Option<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return None;
    }
    if t <= xs[0] {
        return Some(ys[0]);
    }
    let last = xs.len() - 1;
    if t >= xs[last] {
        return Some(ys[last]);
    }
    let i = xs.partition_point(|&x| x <= t);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    if x1 == x0 {
        return Some(y0);
    }
    Some(y0 + (y1 - y0) * (t - x0) / (x1 - x0))
}

/// First time the loss drops below `threshold`, linearly interpolated between
/// records. Returns `Some(0.0)` when the initial loss is already below it and
/// `None` when it is never reached.
pub fn time_to_criterion(traj: &Trajectory, threshold: f64) -> Option<f64> {
    time_to_threshold(&traj.epochs, &traj.loss, threshold)
}

pub fn time_to_threshold(times: &[f64], loss: &[f64], threshold: f64) -> Option<f64> {
    let first = *loss.first()?;
    if first < threshold {
        return Some(0.0);
    }
    for i in 1..loss.len() {
        if loss[i] < threshold {
            let (l0, l1) = (loss[i - 1], loss[i]);
            let frac = (l0 - threshold) / (l0 - l1);
            return Some(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompareMetric {
    /// Sum over the first trajectory's time points of squared loss differences.
    L2Sum,
    /// Absolute difference of final losses.
    FinalLoss,
    /// Absolute difference in time to reach the threshold.
    TimeTo(f64),
}

impl std::str::FromStr for CompareMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2_sum" => Ok(CompareMetric::L2Sum),
            "final_loss" => Ok(CompareMetric::FinalLoss),
            other => {
                let inner = other
                    .strip_prefix("time_to(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("unknown metric `{other}`")))?;
                let th: f64 = inner.trim().parse().map_err(|_| Error::Parse(format!("bad threshold in `{other}`")))?;
                Ok(CompareMetric::TimeTo(th))
            }
        }
    }
}

/// Compares two loss curves. The second is resampled onto the first's time
/// grid by linear interpolation when the grids differ.
pub fn compare(a: &Trajectory, b: &Trajectory, metric: CompareMetric) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("cannot compare empty trajectories".into()));
    }
    match metric {
        CompareMetric::L2Sum => Ok(l2_sum(&a.epochs, &a.loss, &b.epochs, &b.loss)),
        CompareMetric::FinalLoss => Ok((a.loss[a.len() - 1] - b.loss[b.len() - 1]).abs()),
        CompareMetric::TimeTo(th) => {
            let ta = time_to_criterion(a, th);
            let tb = time_to_criterion(b, th);
            match (ta, tb) {
                (Some(x), Some(y)) => Ok((x - y).abs()),
                _ => Err(Error::Domain(format!("loss {th} not reached by both trajectories"))),
            }
        }
    }
}

pub fn l2_sum(ta: &[f64], la: &[f64], tb: &[f64], lb: &[f64]) -> f64 {
    if ta == tb {
        return la.iter().zip(lb).map(|(x, y)| (x - y) * (x - y)).sum();
    }
    ta.iter()
        .zip(la)
        .map(|(&t, &x)| {
            let y = interpolate(tb, lb, t).unwrap_or(f64::NAN);
            (x - y) * (x - y)
        })
        .sum()
}

/// Index of the curve with the smallest summed squared distance to all
/// others; ties go to the lowest index.
pub fn select_stereotypical_run(curves: &[Vec<f64>]) -> Result<usize> {
    if curves.len() < 2 {
        return Err(Error::InvalidParameter("need at least two runs".into()));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("runs have different lengths".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, ci) in curves.iter().enumerate() {
        let total: f64 = curves.iter().map(|cj| ci.iter().zip(cj).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sum();
        if total < best.1 {
            best = (i, total);
        }
    }
    Ok(best.0)
}

/// Number of plateaus: maximal runs of records from which the loss, while
/// above `floor`, falls by less than a factor `exp(log_tol)` over the next
/// `window` time units.
pub fn count_plateaus(times: &[f64], loss: &[f64], window: f64, log_tol: f64, floor: f64) -> usize {
    let end = match times.last() {
        Some(&t) => t,
        None => return 0,
    };
    let flat: Vec<bool> = times
        .iter()
        .zip(loss)
        .map(|(&t, &l)| {
            if t + window > end || !(l > floor) {
                return false;
            }
            let later = interpolate(times, loss, t + window).unwrap_or(l);
            later > 0.0 && (l / later).ln() < log_tol
        })
        .collect();
    // a single flat point already spans one window
    flat.iter().enumerate().filter(|&(i, &f)| f && (i == 0 || !flat[i - 1])).count()
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:e}")
    }
}

/// Writes one or more trajectories into a single CSV file.
pub fn write_csv(path: &Path, trajs: &[&Trajectory]) -> Result<()> {
    fs::write(path, to_csv(trajs))?;
    Ok(())
}

pub fn to_csv(trajs: &[&Trajectory]) -> String {
    let mut columns: Vec<String> = Vec::new();
    for t in trajs {
        for name in &t.mode_names {
            if !columns.contains(name) {
                columns.push(name.clone());
            }
        }
    }
    let mut out = String::from("epoch,loss,source,run_id");
    for c in &columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for t in trajs {
        let idx: Vec<Option<usize>> = columns.iter().map(|c| t.mode_index(c)).collect();
        for k in 0..t.len() {
            out.push_str(&format!("{},{:e},{},{}", fmt_num(t.epochs[k]), t.loss[k], t.source, t.run_id));
            for m in &idx {
                out.push(',');
                if let Some(m) = m {
                    out.push_str(&format!("{:e}", t.modes[k][*m]));
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Reads every `(source, run_id)` series from a CSV file, in order of first appearance.
pub fn read_csv(path: &Path) -> Result<Vec<Trajectory>> {
    parse_csv(&fs::read_to_string(path)?)
}

/// One CSV row: epoch, loss and the mode cells (empty cells are `None`).
type Row = (f64, f64, Vec<Option<f64>>);

pub fn parse_csv(text: &str) -> Result<Vec<Trajectory>> {
    let mut lines = text.lines();
    let header: Vec<&str> =
        lines.next().ok_or_else(|| Error::Parse("empty trajectory file".into()))?.split(',').collect();
    if header.len() < 4 || header[..4] != ["epoch", "loss", "source", "run_id"] {
        return Err(Error::Parse("trajectory header must start with epoch,loss,source,run_id".into()));
    }
    let mode_cols: Vec<String> = header[4..].iter().map(|s| s.to_string()).collect();
    let mut order: Vec<(String, String)> = Vec::new();
    let mut rows: BTreeMap<(String, String), Vec<Row>> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!("line {}: expected {} cells", n + 2, header.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)));
        let key = (cells[2].to_string(), cells[3].to_string());
        let modes = cells[4..]
            .iter()
            .map(|c| if c.is_empty() { Ok(None) } else { num(c).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        if !rows.contains_key(&key) {
            order.push(key.clone());
        }
        rows.entry(key).or_default().push((num(cells[0])?, num(cells[1])?, modes));
    }
    let mut out = Vec::new();
    for key in order {
        let recs = &rows[&key];
        let present: Vec<usize> = (0..mode_cols.len()).filter(|&m| recs.iter().all(|r| r.2[m].is_some())).collect();
        let mut t = Trajectory::with_modes(&key.0, &key.1, present.iter().map(|&m| mode_cols[m].clone()).collect());
        for (e, l, modes) in recs {
            t.push(*e, *l, present.iter().map(|&m| modes[m].unwrap_or(f64::NAN)).collect());
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(losses: &[f64]) -> Trajectory {
        let mut t = Trajectory::new("test", "0");
        for (i, &l) in losses.iter().enumerate() {
            t.push(i as f64, l, vec![]);
        }
        t
    }

    #[test]
    fn criterion_interpolates() {
        let mut l: Vec<f64> = (0..20).map(|i| 1.0 - 0.05 * i as f64).collect();
        l[10] = 0.52;
        l[11] = 0.38;
        let t = time_to_criterion(&curve(&l), 0.45).unwrap();
        assert!(t > 10.0 && t < 11.0);
        assert!((t - 10.5).abs() < 1e-12);
    }

    #[test]
    fn plateaus_of_a_staircase() {
        // 4 -> 2 -> 1 -> 0.001 with flat stretches of 300 epochs between drops
        let times: Vec<f64> = (0..=1200).map(f64::from).collect();
        let loss: Vec<f64> = times
            .iter()
            .map(|&t| match t as usize {
                0..=299 => 4.0,
                300..=599 => 2.0,
                600..=899 => 1.0,
                _ => 0.001,
            })
            .collect();
        assert_eq!(count_plateaus(&times, &loss, 100.0, 0.05, 0.01), 3);
        let smooth: Vec<f64> = times.iter().map(|&t| (-t / 20.0).exp()).collect();
        assert_eq!(count_plateaus(&times, &smooth, 100.0, 0.05, 1e-3), 0);
        assert_eq!(count_plateaus(&[], &[], 100.0, 0.05, 0.0), 0);
    }

    #[test]
    fn criterion_edge_cases() {
        assert_eq!(time_to_criterion(&curve(&[0.3, 0.2]), 0.5), Some(0.0));
        assert_eq!(time_to_criterion(&curve(&[1.0, 0.9]), 0.5), None);
        assert_eq!(time_to_criterion(&Trajectory::default(), 0.5), None);
    }

    #[test]
    fn stereotypical_selection() {
        let same = vec![vec![1.0, 0.5, 0.1]; 4];
        assert_eq!(select_stereotypical_run(&same).unwrap(), 0);
        let mut runs = same.clone();
        runs[0] = vec![5.0, 5.0, 5.0];
        assert_ne!(select_stereotypical_run(&runs).unwrap(), 0);
        assert!(matches!(select_stereotypical_run(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn compare_metrics() {
        let a = curve(&[1.0, 0.5, 0.25]);
        assert_eq!(compare(&a, &a, CompareMetric::L2Sum).unwrap(), 0.0);
        let b = curve(&[1.0, 0.6, 0.25]);
        assert!((compare(&a, &b, CompareMetric::L2Sum).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(compare(&a, &b, CompareMetric::FinalLoss).unwrap(), 0.0);
        assert!("time_to(0.2)".parse::<CompareMetric>().unwrap() == CompareMetric::TimeTo(0.2));
        assert!("bogus".parse::<CompareMetric>().is_err());
    }

    #[test]
    fn resampled_comparison() {
        let a = curve(&[1.0, 0.5, 0.0]);
        let mut b = Trajectory::new("test", "1");
        b.push(0.0, 1.0, vec![]);
        b.push(2.0, 0.0, vec![]);
        assert!(compare(&a, &b, CompareMetric::L2Sum).unwrap() < 1e-24);
    }

    #[test]
    fn csv_roundtrip_with_modes() {
        let mut a = Trajectory::with_modes("gdln", "7", vec![mode_name(0, 0), mode_name(1, 0)]);
        a.push(0.0, 0.5, vec![1e-7, 2e-7]);
        a.push(10.0, 0.25, vec![0.1, 0.2]);
        let mut b = Trajectory::new("analytic", "linear");
        b.push(0.5, 0.4, vec![]);
        let text = to_csv(&[&a, &b]);
        assert!(text.starts_with("epoch,loss,source,run_id,path0_mode0,path1_mode0\n"));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].epochs, a.epochs);
        assert_eq!(back[0].loss, a.loss);
        assert_eq!(back[0].modes, a.modes);
        assert_eq!(back[1].mode_names.len(), 0);
        assert_eq!(back[1].epochs, vec![0.5]);
    }

    #[test]
    fn header_only_csv() {
        let t = Trajectory::new("relu", "0");
        let text = to_csv(&[&t]);
        assert_eq!(text, "epoch,loss,source,run_id\n");
        assert!(parse_csv(&text).unwrap().is_empty());
    }
}
