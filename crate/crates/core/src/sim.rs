//! Benchmark plant, reference trajectory and the fixed-step closed loop.
//!
//! The joint state `(x, θ̂)` is advanced by classical RK4. The mask and the
//! learning gain are sampled at the start of each step and held for all four
//! stages.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adaptation::{self, AdaptationConfig, AdaptationError};
use crate::controller::{self, ControlGains, SignMode};
use crate::linalg;
use crate::network::{self, DropoutMask, MaskSchedule, NetworkError, NetworkShape, WeightVector};
use crate::oracles::MatchedPlant;
use crate::scenario::{ConfigError, PlantSpec, RngStream, ScenarioConfig, WeightInit};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("plant drift is not finite at x = {x:?}")]
    NonFiniteDrift { x: Vec<f64> },
    #[error("simulation diverged at t = {t}: {what}")]
    Diverged { t: f64, what: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Adaptation(#[from] AdaptationError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trajectory CSV: {0}")]
    BadCsv(String),
}

/// Autonomous drift `f(x)` of `ẋ = f(x) + u`.
pub trait Plant: Send + Sync {
    fn dim(&self) -> usize;
    fn drift(&self, x: &[f64]) -> Result<Vec<f64>, SimError>;
}

/// Three-state benchmark plant.
#[derive(Debug, Clone, Copy, Default)]
pub struct PaperPlant;

impl Plant for PaperPlant {
    fn dim(&self) -> usize {
        3
    }

    fn drift(&self, x: &[f64]) -> Result<Vec<f64>, SimError> {
        paper_drift(x)
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPlant(pub usize);

impl Plant for ZeroPlant {
    fn dim(&self) -> usize {
        self.0
    }

    fn drift(&self, _x: &[f64]) -> Result<Vec<f64>, SimError> {
        Ok(vec![0.0; self.0])
    }
}

/// `f(x) = [x₁x₂²tanh x₂ + sin²x₁,  cos³(x₁+x₂+x₃) − e^{2x₂} + x₁x₂,  x₃² ln(1+|x₁−x₂|)]`.
pub fn paper_drift(x: &[f64]) -> Result<Vec<f64>, SimError> {
    assert_eq!(x.len(), 3, "benchmark plant is three-dimensional");
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let f = vec![
        x1 * x2 * x2 * x2.tanh() + x1.sin().powi(2),
        (x1 + x2 + x3).cos().powi(3) - x2.exp().powi(2) + x1 * x2,
        x3 * x3 * (1.0 + (x1 - x2).abs()).ln(),
    ];
    if !linalg::all_finite(&f) {
        return Err(SimError::NonFiniteDrift { x: x.to_vec() });
    }
    Ok(f)
}

/// `x_d(t) = [sin 2t, −cos t, sin 3t + cos 2t]` and its derivative.
pub fn desired_trajectory(t: f64) -> (Vec<f64>, Vec<f64>) {
    let xd = vec![(2.0 * t).sin(), -t.cos(), (3.0 * t).sin() + (2.0 * t).cos()];
    let xd_dot = vec![
        2.0 * (2.0 * t).cos(),
        t.sin(),
        3.0 * (3.0 * t).cos() - 2.0 * (2.0 * t).sin(),
    ];
    (xd, xd_dot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta: WeightVector,
}

/// Everything evaluated at one point of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub x_dot: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub x_d: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub f: Vec<f64>,
    /// Whether the projection modified the raw update.
    pub projection_active: bool,
}

/// One logged sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_d: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub f: Vec<f64>,
    pub mask_index: usize,
    pub gain: f64,
    pub e_norm: f64,
    pub f_err_norm: f64,
    pub u_norm: f64,
    pub theta_norm: f64,
    /// `‖θ* − θ̂‖`, only known for a matched plant.
    pub theta_err_norm: Option<f64>,
    pub projection_active: bool,
}

/// Time-indexed log, one row per integrator step including `t = 0` and the
/// final time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: f64,
    pub rows: Vec<TrajectoryRow>,
    /// Post-step radial corrections applied to keep `θ̂` in the ball.
    pub radial_corrections: usize,
    pub final_theta: WeightVector,
}

/// The serialized columns of a row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_d: Vec<f64>,
    pub e_norm: f64,
    pub f_err_norm: f64,
    pub u_norm: f64,
    pub mask_index: usize,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrajectoryRecord {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.rows
            .iter()
            .map(|r| CsvRow {
                t: r.t,
                x: r.x.clone(),
                x_d: r.x_d.clone(),
                e_norm: r.e_norm,
                f_err_norm: r.f_err_norm,
                u_norm: r.u_norm,
                mask_index: r.mask_index,
            })
            .collect()
    }

    /// Writes `t,x1..xn,xd1..xdn,e_norm,f_err_norm,u_norm,mask_index` with
    /// 17 significant digits per real.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let n = self.rows.first().map_or(3, |r| r.x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xd{i}")));
        header.extend(["e_norm", "f_err_norm", "u_norm", "mask_index"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![fmt17(r.t)];
            rec.extend(r.x.iter().map(|&v| fmt17(v)));
            rec.extend(r.x_d.iter().map(|&v| fmt17(v)));
            rec.extend([r.e_norm, r.f_err_norm, r.u_norm].map(fmt17));
            rec.push(r.mask_index.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }
}

/// Parses output of [`TrajectoryRecord::write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, SimError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 6 || (cols - 5) % 2 != 0 {
        return Err(SimError::BadCsv(format!("unexpected column count {cols}")));
    }
    let n = (cols - 5) / 2;
    let parse = |s: &str| -> Result<f64, SimError> {
        s.parse::<f64>()
            .map_err(|e| SimError::BadCsv(format!("bad number {s:?}: {e}")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(SimError::BadCsv("ragged row".into()));
        }
        let vals: Vec<&str> = rec.iter().collect();
        rows.push(CsvRow {
            t: parse(vals[0])?,
            x: vals[1..=n].iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
            x_d: vals[n + 1..=2 * n].iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
            e_norm: parse(vals[2 * n + 1])?,
            f_err_norm: parse(vals[2 * n + 2])?,
            u_norm: parse(vals[2 * n + 3])?,
            mask_index: vals[2 * n + 4]
                .parse()
                .map_err(|e| SimError::BadCsv(format!("bad mask index: {e}")))?,
        });
    }
    Ok(rows)
}

/// What an observer sees after each accepted step.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub step: u64,
    pub t: f64,
    pub mask: &'a DropoutMask,
    pub gain: f64,
    pub theta_before: &'a [f64],
    pub theta_after: &'a [f64],
}

/// Closed-loop system assembled from a scenario.
pub struct ClosedLoop {
    shape: NetworkShape,
    plant: Box<dyn Plant>,
    ideal: Option<WeightVector>,
    gains: ControlGains,
    sign: SignMode,
    adaptation: AdaptationConfig,
    negate_update: bool,
    schedule: MaskSchedule<ChaCha8Rng>,
}

impl ClosedLoop {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let shape = cfg.shape()?;
        let (plant, ideal): (Box<dyn Plant>, Option<WeightVector>) = match cfg.plant {
            PlantSpec::Paper => (Box::new(PaperPlant), None),
            PlantSpec::Zero => (Box::new(ZeroPlant(shape.input_dim())), None),
            PlantSpec::Matched { ideal_variance } => {
                let plant = MatchedPlant::sample(
                    shape.clone(),
                    ideal_variance.sqrt(),
                    &mut cfg.rng(RngStream::IdealWeights),
                );
                if plant.ideal().norm() > cfg.adaptation.weight_bound {
                    return Err(ConfigError::Invalid(format!(
                        "ideal weight norm {} exceeds the weight bound",
                        plant.ideal().norm()
                    ))
                    .into());
                }
                let ideal = plant.ideal().clone();
                (Box::new(plant), Some(ideal))
            }
        };
        let schedule = MaskSchedule::new(shape.clone(), cfg.mask_schedule_config(), cfg.rng(RngStream::Masks))?;
        Ok(Self {
            shape,
            plant,
            ideal,
            gains: cfg.gains,
            sign: cfg.sign,
            adaptation: cfg.adaptation.clone(),
            negate_update: cfg.negate_update,
            schedule,
        })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn ideal_weights(&self) -> Option<&WeightVector> {
        self.ideal.as_ref()
    }

    /// Initial state `(0, x(0), θ̂(0))`.
    pub fn initial_state(&self, cfg: &ScenarioConfig) -> SimState {
        let p = self.shape.param_count();
        let mut rng = cfg.rng(RngStream::InitialWeights);
        let theta = match cfg.init {
            WeightInit::Normal { variance } => WeightVector::sample_normal(p, variance.sqrt(), &mut rng),
            WeightInit::NormalStdDev { std_dev } => WeightVector::sample_normal(p, std_dev, &mut rng),
            WeightInit::AroundIdeal { variance } => {
                let ideal = self.ideal.as_ref().expect("validated: matched plant");
                let noise = WeightVector::sample_normal(p, variance.sqrt(), &mut cfg.rng(RngStream::IdealPerturbation));
                WeightVector::new(linalg::add(ideal.as_slice(), noise.as_slice()))
            }
        };
        SimState {
            t: 0.0,
            x: cfg.initial_state.clone(),
            theta,
        }
    }

    /// Per-parameter flags for weights the mask drops, or `None` when
    /// nothing is dropped.
    pub fn frozen_set(&self, mask: &DropoutMask) -> Option<Vec<bool>> {
        let dropped = mask.dropped_parameters(&self.shape);
        if dropped.is_empty() {
            return None;
        }
        let mut f = vec![false; self.shape.param_count()];
        dropped.into_iter().for_each(|i| f[i] = true);
        Some(f)
    }

    /// Mask and gain in force at `t`.
    pub fn schedules_at(&mut self, t: f64) -> Result<(DropoutMask, f64), SimError> {
        Ok((self.schedule.mask_at(t)?, self.adaptation.gain_at(t)))
    }

    /// Closed-loop right-hand side with the mask and gain in force at `state.t`.
    pub fn rhs(&mut self, state: &SimState) -> Result<Evaluation, SimError> {
        let (mask, gain) = self.schedules_at(state.t)?;
        self.evaluate(state.t, &state.x, &state.theta, &mask, gain, true)
    }

    /// Right-hand side with explicit mask and gain. `checked` enforces the
    /// projection precondition on `θ̂`. Weights addressing dropped rows are
    /// held fixed by the projection as well as by the Jacobian.
    pub fn evaluate(
        &self,
        t: f64,
        x: &[f64],
        theta: &WeightVector,
        mask: &DropoutMask,
        gain: f64,
        checked: bool,
    ) -> Result<Evaluation, SimError> {
        let (x_d, xd_dot) = desired_trajectory(t);
        let e = controller::tracking_error(x, &x_d).expect("dimensions fixed by config");
        let (phi_hat, jac) = network::forward_with_jacobian(x, mask, theta, &self.shape)?;
        let u = controller::control_with(&xd_dot, &phi_hat, &e, &self.gains, self.sign);
        let f = self.plant.drift(x)?;
        let x_dot = linalg::add(&f, &u);
        let raw = adaptation::raw_update(&e, &jac, gain, theta.len())?;
        let frozen = self.frozen_set(mask);
        let mut theta_dot = match (checked, &frozen) {
            (true, None) => adaptation::projection(theta.as_slice(), &raw, &self.adaptation)?,
            (true, Some(f)) => adaptation::projection_in_subspace(theta.as_slice(), &raw, f, &self.adaptation)?,
            (false, f) => adaptation::project_unchecked(theta.as_slice(), &raw, &self.adaptation, f.as_deref()),
        };
        let projection_active = theta_dot != raw;
        if self.negate_update {
            theta_dot.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(Evaluation {
            x_dot,
            theta_dot,
            x_d,
            e,
            u,
            phi_hat,
            f,
            projection_active,
        })
    }
}

/// Runs a scenario and returns the per-step log.
pub fn simulate(cfg: &ScenarioConfig) -> Result<TrajectoryRecord, SimError> {
    simulate_with_observer(cfg, |_| {})
}

/// [`simulate`], calling `observer` after every accepted step.
pub fn simulate_with_observer<F>(cfg: &ScenarioConfig, mut observer: F) -> Result<TrajectoryRecord, SimError>
where
    F: FnMut(&StepEvent<'_>),
{
    let mut sys = ClosedLoop::new(cfg)?;
    let steps = cfg.step_count()?;
    let h = cfg.step;
    let n = cfg.initial_state.len();
    let radius = cfg.adaptation.outer_radius();
    let mut state = sys.initial_state(cfg);
    if state.theta.norm() > radius {
        return Err(ConfigError::Invalid(format!(
            "initial weight norm {} is outside the projection region {radius}",
            state.theta.norm()
        ))
        .into());
    }

    let mut rows = Vec::with_capacity(steps as usize + 1);
    let mut radial_corrections = 0;
    for step in 0..=steps {
        let t = step as f64 * h;
        state.t = t;
        let (mask, gain) = sys.schedules_at(t)?;
        let k1 = sys.evaluate(t, &state.x, &state.theta, &mask, gain, true)?;
        let row = make_row(t, &state, &k1, &mask, gain, sys.ideal_weights());
        if !(linalg::all_finite(&row.u) && row.e_norm.is_finite()) {
            return Err(SimError::Diverged {
                t,
                what: "non-finite control or error".into(),
            });
        }
        rows.push(row);
        if step == steps {
            break;
        }

        let stage = |dt: f64, k: &Evaluation| -> (Vec<f64>, WeightVector) {
            let mut x = state.x.clone();
            linalg::axpy(dt, &k.x_dot, &mut x);
            let mut th = state.theta.clone();
            linalg::axpy(dt, &k.theta_dot, th.as_mut_slice());
            (x, th)
        };
        let (x2, th2) = stage(h / 2.0, &k1);
        let k2 = sys.evaluate(t + h / 2.0, &x2, &th2, &mask, gain, false)?;
        let (x3, th3) = stage(h / 2.0, &k2);
        let k3 = sys.evaluate(t + h / 2.0, &x3, &th3, &mask, gain, false)?;
        let (x4, th4) = stage(h, &k3);
        let k4 = sys.evaluate(t + h, &x4, &th4, &mask, gain, false)?;

        let theta_before = state.theta.as_slice().to_vec();
        for i in 0..n {
            state.x[i] += h / 6.0 * (k1.x_dot[i] + 2.0 * k2.x_dot[i] + 2.0 * k3.x_dot[i] + k4.x_dot[i]);
        }
        for (i, th) in state.theta.as_mut_slice().iter_mut().enumerate() {
            *th += h / 6.0
                * (k1.theta_dot[i] + 2.0 * k2.theta_dot[i] + 2.0 * k3.theta_dot[i] + k4.theta_dot[i]);
        }
        // A finite step can leave the ball along the tangent; pull it back.
        let frozen = sys.frozen_set(&mask);
        if adaptation::clamp_to_ball(state.theta.as_mut_slice(), radius, frozen.as_deref()) {
            radial_corrections += 1;
        }
        if !(linalg::all_finite(&state.x) && state.theta.norm().is_finite()) {
            return Err(SimError::Diverged {
                t: t + h,
                what: "non-finite state".into(),
            });
        }
        observer(&StepEvent {
            step,
            t,
            mask: &mask,
            gain,
            theta_before: &theta_before,
            theta_after: state.theta.as_slice(),
        });
    }
    Ok(TrajectoryRecord {
        step: h,
        rows,
        radial_corrections,
        final_theta: state.theta,
    })
}

fn make_row(
    t: f64,
    state: &SimState,
    ev: &Evaluation,
    mask: &DropoutMask,
    gain: f64,
    ideal: Option<&WeightVector>,
) -> TrajectoryRow {
    TrajectoryRow {
        t,
        x: state.x.clone(),
        x_d: ev.x_d.clone(),
        e: ev.e.clone(),
        u: ev.u.clone(),
        phi_hat: ev.phi_hat.clone(),
        f: ev.f.clone(),
        mask_index: mask.switch_index(),
        gain,
        e_norm: linalg::norm(&ev.e),
        f_err_norm: linalg::norm(&linalg::sub(&ev.f, &ev.phi_hat)),
        u_norm: linalg::norm(&ev.u),
        theta_norm: state.theta.norm(),
        theta_err_norm: ideal.map(|w| linalg::norm(&linalg::sub(w.as_slice(), state.theta.as_slice()))),
        projection_active: ev.projection_active,
    }
}
