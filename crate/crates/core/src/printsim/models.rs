use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::rng::{standard_normal, ACTUATOR_CHANNEL, SENSOR_CHANNEL};
use super::PrintError;

/// Plant law `achieved = commanded · gain · (1 + drift_rate · layer) · exp(ε)`
/// with `ε ~ N(0, noise_sd²)` and `layer` counted from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorModel {
    pub gain: f64,
    pub drift_rate: f64,
    #[serde(default)]
    pub noise_sd: f64,
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl ActuatorModel {
    pub fn identity() -> Self {
        Self { gain: 1.0, drift_rate: 0.0, noise_sd: 0.0 }
    }

    pub fn validate(&self) -> Result<(), PrintError> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(PrintError::InvalidModel(format!("actuator gain must be positive, got {}", self.gain)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(PrintError::InvalidModel(format!("actuator noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if !self.drift_rate.is_finite() {
            return Err(PrintError::InvalidModel("actuator drift_rate must be finite".into()));
        }
        Ok(())
    }

    /// `gain · (1 + drift_rate · layer)`.
    pub fn mean_factor(&self, layer: usize) -> f64 {
        self.gain * (1.0 + self.drift_rate * layer as f64)
    }

    pub fn achieve(&self, commanded: f64, layer: usize, element: usize, seed: u64) -> Result<f64, PrintError> {
        let factor = self.mean_factor(layer);
        if factor <= 0.0 {
            return Err(PrintError::InvalidModel(format!("actuator factor {factor} at layer {layer} is not positive")));
        }
        let eps = if self.noise_sd > 0.0 {
            self.noise_sd * standard_normal(seed, ACTUATOR_CHANNEL, layer as u64, element as u64)
        } else {
            0.0
        };
        Ok(commanded * factor * eps.exp())
    }
}

/// Which printed elements a measurement round observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// Only the layer just printed.
    #[default]
    NewestLayer,
    /// Every printed element, every round.
    AllPrinted,
}

/// `measured = achieved · exp(η)`, `η ~ N(0, noise_sd²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorModel {
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub coverage: Coverage,
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), PrintError> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(PrintError::InvalidModel(format!("sensor noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    pub fn measure(&self, achieved: f64, round: usize, element: usize, seed: u64) -> f64 {
        if self.noise_sd == 0.0 {
            return achieved;
        }
        achieved * (self.noise_sd * standard_normal(seed, SENSOR_CHANNEL, round as u64, element as u64)).exp()
    }
}

/// Independent Gaussian posteriors on the log of each element's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub prior_sd: f64,
    pub log_mean: Vec<f64>,
    pub log_var: Vec<f64>,
    pub observations: Vec<u32>,
}

impl EstimatorState {
    /// Every element starts at the prior `N(ln v, prior_sd²)`.
    pub fn new(prior_values: &[f64], prior_sd: f64) -> Result<Self, PrintError> {
        if !(prior_sd > 0.0 && prior_sd.is_finite()) {
            return Err(PrintError::InvalidModel(format!("prior_sd must be positive, got {prior_sd}")));
        }
        let n = prior_values.len();
        let mut s = Self { prior_sd, log_mean: vec![0.0; n], log_var: vec![0.0; n], observations: vec![0; n] };
        for (e, &v) in prior_values.iter().enumerate() {
            s.reset(e, v)?;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.log_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_mean.is_empty()
    }

    /// Back to the prior centred on `value`.
    pub fn reset(&mut self, e: usize, value: f64) -> Result<(), PrintError> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(PrintError::InvalidModel(format!("prior value {value} for element {e} is not positive")));
        }
        self.log_mean[e] = value.ln();
        self.log_var[e] = self.prior_sd * self.prior_sd;
        self.observations[e] = 0;
        Ok(())
    }

    /// Conjugate update with one measurement `y` of element `e` whose log
    /// carries noise of standard deviation `sd`.
    pub fn update(&mut self, e: usize, y: f64, sd: f64) {
        let ly = y.ln();
        self.observations[e] += 1;
        if sd == 0.0 {
            self.log_mean[e] = ly;
            self.log_var[e] = 0.0;
            return;
        }
        let var = self.log_var[e];
        if var == 0.0 {
            return;
        }
        let meas_prec = 1.0 / (sd * sd);
        let prec = 1.0 / var + meas_prec;
        self.log_mean[e] = (self.log_mean[e] / var + ly * meas_prec) / prec;
        self.log_var[e] = 1.0 / prec;
    }

    /// `exp` of the posterior mean of the log value.
    pub fn estimate(&self, e: usize) -> f64 {
        self.log_mean[e].exp()
    }
}

/// One test-print record: the command sent, the layer it was printed in
/// and the value measured afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestPrint {
    pub layer: usize,
    pub commanded: f64,
    pub measured: f64,
}

/// Least-squares fit of `ln(measured/commanded) = ln gain + ln(1 + drift·layer)`.
///
/// A linear fit of the ratio against the layer gives the starting point;
/// Gauss–Newton on the log residuals refines it. With a single distinct
/// layer the drift is not identifiable and is set to 0. `noise_sd` is the
/// residual standard deviation (0 when there are no spare degrees of
/// freedom).
pub fn calibrate_actuator(prints: &[TestPrint]) -> Result<ActuatorModel, PrintError> {
    if prints.len() < 2 {
        return Err(PrintError::InsufficientData { needed: 2, found: prints.len() });
    }
    if let Some(p) = prints.iter().find(|p| !(p.commanded > 0.0 && p.measured > 0.0)) {
        return Err(PrintError::InvalidModel(format!("test print values must be positive: {p:?}")));
    }
    let n = prints.len() as f64;
    let r: Vec<f64> = prints.iter().map(|p| (p.measured / p.commanded).ln()).collect();
    let l: Vec<f64> = prints.iter().map(|p| p.layer as f64).collect();
    let one_layer = prints.iter().all(|p| p.layer == prints[0].layer);

    let (log_gain, drift, params) = if one_layer {
        (r.iter().sum::<f64>() / n, 0.0, 1.0)
    } else {
        let q: Vec<f64> = prints.iter().map(|p| p.measured / p.commanded).collect();
        let (a, b) = line_fit(&l, &q);
        let (mut theta, mut d) = if a > 0.0 && l.iter().all(|li| 1.0 + b / a * li > 0.0) {
            (a.ln(), b / a)
        } else {
            (r.iter().sum::<f64>() / n, 0.0)
        };
        let sse = |theta: f64, d: f64| -> f64 {
            r.iter().zip(&l).map(|(ri, li)| (ri - theta - (1.0 + d * li).ln()).powi(2)).sum()
        };
        for _ in 0..100 {
            let mut jtj = Matrix2::zeros();
            let mut jtr = Vector2::zeros();
            for (ri, li) in r.iter().zip(&l) {
                let den = 1.0 + d * li;
                let res = ri - theta - den.ln();
                let j = Vector2::new(1.0, li / den);
                jtj += j * j.transpose();
                jtr += j * res;
            }
            let Some(step) = jtj.lu().solve(&jtr) else { break };
            let current = sse(theta, d);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-10 {
                let (nt, nd) = (theta + t * step[0], d + t * step[1]);
                if l.iter().all(|li| 1.0 + nd * li > 0.0) && sse(nt, nd) <= current {
                    theta = nt;
                    d = nd;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || step.norm() * t <= 1e-15 * (1.0 + theta.abs() + d.abs()) {
                break;
            }
        }
        (theta, d, 2.0)
    };
    let sse: f64 = r.iter().zip(&l).map(|(ri, li)| (ri - log_gain - (1.0 + drift * li).ln()).powi(2)).sum();
    let noise_sd = if n > params { (sse / (n - params)).sqrt() } else { 0.0 };
    Ok(ActuatorModel { gain: log_gain.exp(), drift_rate: drift, noise_sd })
}

/// Ordinary least squares `y ≈ a + b x`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}
