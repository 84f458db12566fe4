//! Closed-form and reduced learning dynamics.
//!
//! Time is measured in the same units as training epochs; `tau = 1 / (N * lr)`
//! converts between the two.

use crate::datasets::{CorrelationPair, Dataset};
use crate::error::{Error, Result};
use crate::gdln::PathwayStats;
use crate::linalg::Matrix;
use crate::trajectory::{mode_name, Trajectory};

/// One input-output mode of a two-layer linear pathway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams {
    /// Input-output singular value.
    pub lambda: f64,
    /// Input variance along the mode.
    pub delta_x: f64,
    /// Mode strength at `t = 0`.
    pub a0: f64,
    pub tau: f64,
}

impl ModeParams {
    pub fn new(lambda: f64, delta_x: f64, a0: f64, tau: f64) -> Result<ModeParams> {
        let p = ModeParams { lambda, delta_x, a0, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.delta_x > 0.0) {
            return Err(Error::InvalidParameter(format!("input variance must be > 0, got {}", self.delta_x)));
        }
        if !(self.a0 > 0.0) {
            return Err(Error::InvalidParameter(format!("initial strength must be > 0, got {}", self.a0)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn fixed_point(&self) -> f64 {
        self.lambda / self.delta_x
    }
}

/// Tau for a dataset of `n` points trained with learning rate `lr`.
pub fn tau_for(n: usize, lr: f64) -> f64 {
    1.0 / (n as f64 * lr)
}

/// Sigmoidal solution of `tau da/dt = 2a(lambda - a delta)`.
pub fn linear_mode_trajectory(params: &ModeParams, t: f64) -> f64 {
    let ModeParams { lambda, delta_x, a0, tau } = *params;
    if lambda == 0.0 {
        return a0;
    }
    let fixed = lambda / delta_x;
    fixed / (1.0 - (1.0 - fixed / a0) * (-2.0 * lambda * t / tau).exp())
}

/// Time at which the mode reaches `omega_f`, which must lie strictly between
/// the initial strength and the fixed point.
pub fn time_to_mode_value(params: &ModeParams, omega_f: f64) -> Result<f64> {
    params.validate()?;
    let ModeParams { lambda, delta_x, a0, tau } = *params;
    let fixed = lambda / delta_x;
    let (lo, hi) = if a0 < fixed { (a0, fixed) } else { (fixed, a0) };
    if !(omega_f > lo && omega_f < hi) {
        return Err(Error::Domain(format!("target {omega_f} outside ({lo}, {hi})")));
    }
    Ok(tau / (2.0 * lambda) * ((omega_f * (lambda - a0 * delta_x)) / (a0 * (lambda - omega_f * delta_x))).ln())
}

/// Balanced-equivalent initial strength of a two-layer pathway whose layers
/// are drawn i.i.d. with variances `var_in` and `var_out`. `active_fraction`
/// is the expected share of hidden units carrying the mode (1 for explicit
/// gates, about 1/2 for rectified units at random initialization).
pub fn effective_initial_strength(hidden: usize, active_fraction: f64, var_in: f64, var_out: f64) -> f64 {
    hidden as f64 * active_fraction * (var_in + var_out) / 4.0
}

/// Initial strength of each mode of a two-layer pathway with weights
/// `w_in` (hidden x inputs) and `w_out` (outputs x hidden): `|P_a|^2` with
/// `P = (W_in V + W_out^T U) / 2`, the component that grows from the start.
pub fn initial_mode_strength(w_in: &Matrix, w_out: &Matrix, u: &Matrix, v: &Matrix) -> Result<Vec<f64>> {
    if w_in.nrows() != w_out.ncols()
        || w_in.ncols() != v.nrows()
        || w_out.nrows() != u.nrows()
        || u.ncols() != v.ncols()
    {
        return Err(Error::Shape("weights and mode vectors do not line up".into()));
    }
    let p = (w_in * v + w_out.transpose() * u) / 2.0;
    Ok((0..p.ncols()).map(|a| p.column(a).norm_squared()).collect())
}

/// Initial strength for which the trajectory with growth rate `lambda` and
/// fixed point `fixed` passes `fixed / 2` at time `t_half`.
pub fn anchored_initial_strength(lambda: f64, fixed: f64, tau: f64, t_half: f64) -> f64 {
    fixed / (1.0 + (2.0 * lambda * t_half / tau).exp())
}

/// Loss `tr(sigma_y)/2 - sum_a (s_a m_a - d_a m_a^2 / 2)` of a network whose map
/// is `sum_a m_a u_a v_a^T` on modes diagonalizing both statistics.
pub fn modal_loss(half_trace_sigma_y: f64, s: &[f64], d: &[f64], strengths: &[f64]) -> f64 {
    half_trace_sigma_y - s.iter().zip(d).zip(strengths).map(|((s, d), m)| s * m - 0.5 * d * m * m).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XorVariant {
    /// Two pathways split by output sign.
    LinearGating,
    /// Four pathways, one per datapoint.
    XorGating,
}

impl XorVariant {
    pub fn name(self) -> &'static str {
        match self {
            XorVariant::LinearGating => "linear_gating",
            XorVariant::XorGating => "xor_gating",
        }
    }

    /// Weight of the single-pathway loss in the total (pathways per sign pair).
    fn multiplicity(self) -> f64 {
        match self {
            XorVariant::LinearGating => 1.0,
            XorVariant::XorGating => 2.0,
        }
    }
}

/// Singular value and input variance driving each pathway of the variant.
pub fn xor_mode(delta: f64, variant: XorVariant) -> (f64, f64) {
    match variant {
        XorVariant::LinearGating => (delta / 2.0, delta * delta / 2.0),
        XorVariant::XorGating => {
            // one datapoint per pathway: S = |x| / 4, D = |x|^2 / 4
            let norm_sq = 2.0 + delta * delta;
            (norm_sq.sqrt() / 4.0, norm_sq / 4.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XorLoss {
    pub loss: f64,
    /// Set when the variant has no learning signal (linear gating at zero margin).
    pub degenerate: bool,
}

/// Total loss of the gated network on the margin task at time `t`.
pub fn xor_gdln_loss(delta: f64, t: f64, variant: XorVariant, a0: f64, tau: f64) -> Result<XorLoss> {
    if !(delta >= 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("need delta >= 0 and t >= 0, got {delta}, {t}")));
    }
    let (s, d) = xor_mode(delta, variant);
    if variant == XorVariant::LinearGating && delta == 0.0 {
        return Ok(XorLoss { loss: 0.5, degenerate: true });
    }
    let a = linear_mode_trajectory(&ModeParams::new(s, d, a0, tau)?, t);
    let m = variant.multiplicity();
    Ok(XorLoss { loss: 0.5 - m * (2.0 * s * a - d * a * a), degenerate: false })
}

/// Time for the analytic loss to fall to `threshold`; `None` if it never does.
pub fn xor_time_to_loss(delta: f64, threshold: f64, variant: XorVariant, a0: f64, tau: f64) -> Result<Option<f64>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be > 0, got {threshold}")));
    }
    let (s, d) = xor_mode(delta, variant);
    if s == 0.0 {
        return Ok(if threshold > 0.5 { Some(0.0) } else { None });
    }
    let params = ModeParams::new(s, d, a0, tau)?;
    let m = variant.multiplicity();
    let l0 = 0.5 - m * (2.0 * s * a0 - d * a0 * a0);
    if l0 < threshold {
        return Ok(Some(0.0));
    }
    // smaller root of d a^2 - 2 s a + (1/2 - threshold) / m = 0
    let disc = s * s - d * (0.5 - threshold) / m;
    if disc < 0.0 {
        return Ok(None);
    }
    let a = (s - disc.sqrt()) / d;
    if a >= params.fixed_point() {
        return Ok(None);
    }
    Ok(Some(time_to_mode_value(&params, a)?))
}

/// Margin at which both variants have equal singular values.
pub fn crossover_delta() -> f64 {
    (2.0f64 / 3.0).sqrt()
}

/// Analytic loss curves of a variant sampled at `times`.
pub fn xor_loss_curve(delta: f64, variant: XorVariant, a0: f64, tau: f64, times: &[f64]) -> Result<Trajectory> {
    let mut traj = Trajectory::new("analytic", variant.name());
    for &t in times {
        traj.push(t, xor_gdln_loss(delta, t, variant, a0, tau)?.loss, vec![]);
    }
    Ok(traj)
}

/// Reduced per-mode dynamics of competing pathways under the balanced,
/// aligned ansatz: for every pathway `p` and mode `a`,
/// `tau dB_p/dt = depth_p * B_p^((2 depth_p - 2)/depth_p) * (S_p - sum_j o_pj i_pj B_j)`
/// with `o` the output-vector overlaps and `i` the input variances coupling `j` into `p`.
#[derive(Debug, Clone)]
pub struct RaceSystem {
    /// `sources[p][a]`: singular value of mode `a` of pathway `p`.
    pub sources: Vec<Vec<f64>>,
    /// `output_overlaps[p][j][a]`: `(U_p^T U_j)_aa`, in `[-1, 1]`.
    pub output_overlaps: Vec<Vec<Vec<f64>>>,
    /// `input_variances[p][j][a]`: `(V_j^T sigma_x(j,p) V_p)_aa`.
    pub input_variances: Vec<Vec<Vec<f64>>>,
    /// Layers per pathway (2 for one hidden layer).
    pub depths: Vec<usize>,
    /// Initial strengths `[p][a]`.
    pub init: Vec<Vec<f64>>,
}

impl RaceSystem {
    /// A single pathway with one mode per singular value.
    pub fn single(sources: Vec<f64>, variances: Vec<f64>, init: Vec<f64>) -> RaceSystem {
        let m = sources.len();
        RaceSystem {
            sources: vec![sources],
            output_overlaps: vec![vec![vec![1.0; m]]],
            input_variances: vec![vec![variances]],
            depths: vec![2],
            init: vec![init],
        }
    }

    /// Builds the system for the listed paths from their effective statistics,
    /// projecting every pathway on its own leading `modes` singular directions.
    pub fn from_stats(
        stats: &PathwayStats,
        paths: &[usize],
        modes: usize,
        depth: usize,
        init: f64,
    ) -> Result<RaceSystem> {
        let svds: Vec<_> = paths.iter().map(|&p| stats.pairs[p].svd_yx.truncate(modes)).collect();
        let m = svds.iter().map(|s| s.s.len()).min().unwrap_or(0);
        let mut output_overlaps = Vec::new();
        let mut input_variances = Vec::new();
        for (a, &p) in paths.iter().enumerate() {
            let mut o_row = Vec::new();
            let mut i_row = Vec::new();
            for (b, &j) in paths.iter().enumerate() {
                let sx = stats
                    .sigma_x(j, p)
                    .ok_or_else(|| Error::InvalidParameter(format!("paths {j} and {p} do not share an output")))?;
                if svds[a].u.nrows() != svds[b].u.nrows() {
                    return Err(Error::Shape("pathways write different output spaces".into()));
                }
                let o = svds[a].u.transpose() * &svds[b].u;
                let i = svds[b].v.transpose() * sx * &svds[a].v;
                o_row.push((0..m).map(|k| o[(k, k)]).collect());
                i_row.push((0..m).map(|k| i[(k, k)]).collect());
            }
            output_overlaps.push(o_row);
            input_variances.push(i_row);
        }
        Ok(RaceSystem {
            sources: svds.iter().map(|s| s.s[..m].to_vec()).collect(),
            output_overlaps,
            input_variances,
            depths: vec![depth; paths.len()],
            init: vec![vec![init; m]; paths.len()],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let np = self.sources.len();
        let ok = self.output_overlaps.len() == np
            && self.input_variances.len() == np
            && self.depths.len() == np
            && self.init.len() == np;
        if !ok {
            return Err(Error::Shape("race system fields disagree on pathway count".into()));
        }
        for p in 0..np {
            let m = self.sources[p].len();
            if self.init[p].len() != m || self.output_overlaps[p].len() != np || self.input_variances[p].len() != np {
                return Err(Error::Shape(format!("pathway {p} has inconsistent mode counts")));
            }
            for j in 0..np {
                if self.output_overlaps[p][j].len() != m || self.input_variances[p][j].len() != m {
                    return Err(Error::Shape(format!("coupling ({p},{j}) has wrong length")));
                }
                if self.output_overlaps[p][j].iter().any(|o| o.abs() > 1.0 + 1e-9) {
                    return Err(Error::InvalidParameter(format!("overlap ({p},{j}) outside [-1, 1]")));
                }
            }
            if self.depths[p] == 0 {
                return Err(Error::InvalidParameter("pathway depth must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Explicit Euler integration of a [`RaceSystem`]. Row `k` of the result is
/// time `k * dt`, with one column per pathway mode.
pub fn race_reduction_integrate(system: &RaceSystem, tau: f64, dt: f64, steps: usize) -> Result<Trajectory> {
    system.validate()?;
    if !(tau > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter("tau and dt must be positive".into()));
    }
    let max_s = system.sources.iter().flatten().fold(0.0f64, |a, &s| a.max(s.abs()));
    if max_s > 0.0 && dt > tau / (10.0 * max_s) {
        return Err(Error::Unstable(format!("dt {dt} exceeds tau / (10 max S) = {}", tau / (10.0 * max_s))));
    }
    let np = system.sources.len();
    let names = (0..np).flat_map(|p| (0..system.sources[p].len()).map(move |a| mode_name(p, a))).collect();
    let mut traj = Trajectory::with_modes("analytic", "race", names);
    let mut b = system.init.clone();
    traj.push(0.0, f64::NAN, b.iter().flatten().copied().collect());
    for step in 1..=steps {
        let mut next = b.clone();
        for p in 0..np {
            let depth = system.depths[p] as f64;
            for a in 0..b[p].len() {
                let mut drive = system.sources[p][a];
                for j in 0..np {
                    drive -= system.output_overlaps[p][j][a] * system.input_variances[p][j][a] * b[j][a];
                }
                let bp = b[p][a];
                let gain = depth * bp.signum() * bp.abs().powf((2.0 * depth - 2.0) / depth);
                next[p][a] = bp + dt / tau * gain * drive;
                if !next[p][a].is_finite() {
                    return Err(Error::Diverged { epoch: step, loss: f64::NAN });
                }
            }
        }
        b = next;
        traj.push(step as f64 * dt, f64::NAN, b.iter().flatten().copied().collect());
    }
    Ok(traj)
}

/// Mode strength of a context pathway in the symmetric `contexts`-context task:
/// the solution of `tau dB/dt = 2B(S - B D / (C - 1))`.
pub fn contextual_closed_form(contexts: usize, s: f64, d: f64, b0: f64, tau: f64, t: f64) -> Result<f64> {
    if contexts < 3 {
        return Err(Error::Unsupported(format!("closed form needs at least 3 contexts, got {contexts}")));
    }
    let c1 = (contexts - 1) as f64;
    let params = ModeParams::new(s, d / c1, b0, tau)?;
    Ok(linear_mode_trajectory(&params, t))
}

/// Fixed point `(C - 1) S / D` of [`contextual_closed_form`].
pub fn contextual_fixed_point(contexts: usize, s: f64, d: f64) -> f64 {
    (contexts as f64 - 1.0) * s / d
}

/// `(input_overlap, output_overlap)` between two context pathways, each
/// active in all but one of `contexts` contexts.
pub fn coupling_coefficients(contexts: usize) -> Result<(f64, f64)> {
    if contexts < 3 {
        return Err(Error::Unsupported(format!("coupling needs at least 3 contexts, got {contexts}")));
    }
    let c1 = contexts as f64 - 1.0;
    Ok(((c1 - 1.0) / c1, -1.0 / c1))
}

/// Targets left after the always-on pathway reaches its fixed point:
/// `Y - U diag(S / D) V^T X`, skipping modes with zero input variance.
pub fn common_pathway_residual(dataset: &Dataset, common: &CorrelationPair) -> Result<Matrix> {
    let svd = &common.svd_yx;
    if svd.u.nrows() != dataset.n_targets() || svd.v.nrows() != dataset.n_inputs() {
        return Err(Error::Shape("statistics do not match the dataset".into()));
    }
    let top = common.mode_variances.iter().fold(0.0f64, |a, &x| a.max(x));
    let mut w = Matrix::zeros(dataset.n_targets(), dataset.n_inputs());
    for a in 0..svd.s.len() {
        let d = common.mode_variances[a];
        if d <= 1e-12 * top.max(1e-300) || svd.s[a] == 0.0 {
            continue;
        }
        w += svd.u.column(a) * svd.v.column(a).transpose() * (svd.s[a] / d);
    }
    Ok(&dataset.targets - w * &dataset.inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Dormand-Prince integration of a scalar ODE, used as an oracle.
    fn integrate(f: impl Fn(f64) -> f64, y0: f64, t_end: f64) -> f64 {
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] =
            [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
        let (mut t, mut y, mut h) = (0.0f64, y0, 1e-3f64);
        while t < t_end {
            h = h.min(t_end - t);
            let mut k = [0.0; 7];
            for i in 0..7 {
                let yi = y + (0..i).map(|j| A[i][j] * k[j]).sum::<f64>() * h;
                k[i] = f(yi);
            }
            let y5 = y + h * (0..7).map(|i| B5[i] * k[i]).sum::<f64>();
            let y4 = y + h * (0..7).map(|i| B4[i] * k[i]).sum::<f64>();
            let err = (y5 - y4).abs() / (1e-14 + 1e-12 * y5.abs());
            if err <= 1.0 {
                t += h;
                y = y5;
            }
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        }
        y
    }

    #[test]
    fn fixed_point_and_origin() {
        let p = ModeParams::new(2.0, 0.5, 4.0, 1.0).unwrap();
        for t in [0.0, 0.3, 10.0] {
            assert!((linear_mode_trajectory(&p, t) - 4.0).abs() < 1e-12);
        }
        let p = ModeParams::new(2.0, 1.0, 1e-6, 1.0).unwrap();
        assert_eq!(linear_mode_trajectory(&p, 0.0), 1e-6);
        assert!((linear_mode_trajectory(&p, 1e3) - 2.0).abs() < 1e-12);
        let p = ModeParams::new(0.0, 1.0, 0.3, 1.0).unwrap();
        assert_eq!(linear_mode_trajectory(&p, 5.0), 0.3);
    }

    #[test]
    fn matches_numeric_ode() {
        let p = ModeParams::new(2.0, 1.0, 1e-6, 1.0).unwrap();
        let want = integrate(|w| 2.0 * w * (2.0 - w), 1e-6, 10.0);
        let got = linear_mode_trajectory(&p, 10.0);
        assert!(((got - want) / want).abs() < 1e-8);
        let p = ModeParams::new(0.7, 0.3, 1e-4, 2.5).unwrap();
        for t in [1.0, 5.0, 20.0, 40.0] {
            let want = integrate(|w| 2.0 * w * (0.7 - 0.3 * w) / 2.5, 1e-4, t);
            assert!(((linear_mode_trajectory(&p, t) - want) / want).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn time_to_value_inverts_trajectory() {
        let p = ModeParams::new(1.0, 1.0, 1e-4, 1.0).unwrap();
        let t = time_to_mode_value(&p, 0.5).unwrap();
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if linear_mode_trajectory(&p, mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((t - lo).abs() < 1e-8);
        for w in [2e-4, 0.1, 0.9, 0.999] {
            let t = time_to_mode_value(&p, w).unwrap();
            assert!((linear_mode_trajectory(&p, t) - w).abs() < 1e-10);
        }
        assert!(matches!(time_to_mode_value(&p, 1.5), Err(Error::Domain(_))));
        assert!(matches!(time_to_mode_value(&p, 1e-5), Err(Error::Domain(_))));
        assert!(time_to_mode_value(&p, 1e-4 * (1.0 + 1e-9)).unwrap() < 1e-6);
    }

    #[test]
    fn xor_losses() {
        for v in [XorVariant::LinearGating, XorVariant::XorGating] {
            let l0 = xor_gdln_loss(1.0, 0.0, v, 1e-12, 2.5).unwrap().loss;
            assert!((l0 - 0.5).abs() < 1e-9);
            let inf = xor_gdln_loss(1.0, 1e4, v, 1e-12, 2.5).unwrap().loss;
            assert!(inf.abs() < 1e-12);
        }
        let (s, d) = xor_mode(0.0, XorVariant::XorGating);
        assert!((s - 0.125f64.sqrt()).abs() < 1e-15);
        assert!((d - 0.5).abs() < 1e-15);
        let deg = xor_gdln_loss(0.0, 3.0, XorVariant::LinearGating, 1e-8, 2.5).unwrap();
        assert!(deg.degenerate);
        assert_eq!(deg.loss, 0.5);
    }

    #[test]
    fn crossover_equalizes_singular_values() {
        let c = crossover_delta();
        assert!((c * c - 2.0 / 3.0).abs() < 1e-12);
        let a = xor_mode(c, XorVariant::LinearGating).0;
        let b = xor_mode(c, XorVariant::XorGating).0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn time_to_loss_agrees_with_curve() {
        for v in [XorVariant::LinearGating, XorVariant::XorGating] {
            let t = xor_time_to_loss(1.2, 0.2, v, 1e-8, 2.5).unwrap().unwrap();
            let l = xor_gdln_loss(1.2, t, v, 1e-8, 2.5).unwrap().loss;
            assert!((l - 0.2).abs() < 1e-9);
        }
        assert_eq!(xor_time_to_loss(0.0, 0.2, XorVariant::LinearGating, 1e-8, 2.5).unwrap(), None);
    }

    #[test]
    fn race_single_pathway_tracks_closed_form() {
        let sys = RaceSystem::single(vec![0.5], vec![1.0], vec![1e-3]);
        let tau = 1.0;
        let dt = 1e-4;
        let traj = race_reduction_integrate(&sys, tau, dt, 200_000).unwrap();
        let p = ModeParams::new(0.5, 1.0, 1e-3, tau).unwrap();
        for k in (0..traj.len()).step_by(10_000) {
            let want = linear_mode_trajectory(&p, traj.epochs[k]);
            assert!((traj.modes[k][0] - want).abs() < 1e-4 * p.fixed_point(), "k={k}");
        }
    }

    #[test]
    fn race_guard_and_inert_pathway() {
        let sys = RaceSystem::single(vec![1.0], vec![1.0], vec![1e-3]);
        assert!(matches!(race_reduction_integrate(&sys, 1.0, 0.2, 10), Err(Error::Unstable(_))));
        let mut sys = RaceSystem::single(vec![0.4], vec![1.0], vec![1e-6]);
        sys.sources.push(vec![0.0]);
        sys.init.push(vec![1e-6]);
        sys.depths.push(2);
        sys.output_overlaps = vec![vec![vec![1.0], vec![1.0]], vec![vec![1.0], vec![1.0]]];
        sys.input_variances = vec![vec![vec![1.0], vec![1.0]], vec![vec![1.0], vec![1.0]]];
        let traj = race_reduction_integrate(&sys, 1.0, 0.01, 20_000).unwrap();
        let last = traj.modes.last().unwrap();
        assert!(last[1].abs() < 1e-6);
        assert!((last[0] - 0.4).abs() < 1e-3);
    }

    #[test]
    fn contextual_fixed_points_and_ode() {
        let (s, d, b0, tau) = (0.09, 1.0 / 12.0, 1e-5, 41.0);
        let c3 = contextual_closed_form(3, s, d, b0, tau, 1e6).unwrap();
        assert!((c3 - 2.0 * s / d).abs() < 1e-12);
        let c5 = contextual_closed_form(5, s, d, b0, tau, 1e6).unwrap();
        assert!((c5 - 4.0 * s / d).abs() < 1e-12);
        assert_eq!(contextual_closed_form(3, s, d, b0, tau, 0.0).unwrap(), b0);
        for c in [3usize, 4, 5] {
            let c1 = (c - 1) as f64;
            for t in [5.0, 25.0, 50.0] {
                let want = integrate(|b| 2.0 * b * (s - b * d / c1) / tau, b0, t * tau);
                let got = contextual_closed_form(c, s, d, b0, tau, t * tau).unwrap();
                assert!(((got - want) / want).abs() < 1e-8, "C={c} t={t}");
            }
        }
        assert!(matches!(contextual_closed_form(2, s, d, b0, tau, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn anchoring_and_measured_strength() {
        let b0 = anchored_initial_strength(0.3, 2.0, 5.0, 40.0);
        let p = ModeParams::new(0.3, 0.15, b0, 5.0).unwrap();
        assert!((linear_mode_trajectory(&p, 40.0) - 1.0).abs() < 1e-12);

        let u = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let v = Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let w_in = Matrix::from_row_slice(2, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let w_out = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        // P = ([2, 0] + [2, 0]) / 2
        assert_eq!(initial_mode_strength(&w_in, &w_out, &u, &v).unwrap(), vec![4.0]);
    }

    #[test]
    fn modal_loss_matches_direct_loss() {
        let ds = crate::datasets::build_hierarchy_dataset(4).unwrap();
        let stats = crate::datasets::correlation_stats(&ds, None).unwrap();
        let m = [0.7, 0.2, 1.1, 0.0];
        let mut w = Matrix::zeros(ds.n_targets(), ds.n_inputs());
        for a in 0..4 {
            w += stats.svd_yx.u.column(a) * stats.svd_yx.v.column(a).transpose() * m[a];
        }
        let n = ds.n_datapoints() as f64;
        let direct = (&ds.targets - w * &ds.inputs).norm_squared() / (2.0 * n);
        let half_trace = ds.targets.norm_squared() / (2.0 * n);
        let modal = modal_loss(half_trace, &stats.svd_yx.s, &stats.mode_variances, &m);
        assert!((direct - modal).abs() < 1e-12, "{direct} vs {modal}");
    }

    #[test]
    fn coupling_values() {
        assert_eq!(coupling_coefficients(3).unwrap(), (0.5, -0.5));
        let (i4, o4) = coupling_coefficients(4).unwrap();
        assert!((i4 - 2.0 / 3.0).abs() < 1e-15 && (o4 + 1.0 / 3.0).abs() < 1e-15);
        assert!(coupling_coefficients(2).is_err());
    }

    #[test]
    fn residual_of_shared_only_task_vanishes() {
        let tree = crate::datasets::build_hierarchy_labels(4).unwrap();
        let empty = Matrix::zeros(0, 4);
        let ds = crate::datasets::build_contextual(4, 3, &tree, &[empty.clone(), empty.clone(), empty]).unwrap();
        let stats = crate::datasets::correlation_stats(&ds, None).unwrap();
        let r = common_pathway_residual(&ds, &stats).unwrap();
        assert!(crate::linalg::max_abs(&r) < 1e-12);
    }
}
