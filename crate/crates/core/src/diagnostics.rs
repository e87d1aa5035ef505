//! Log-log growth exponents of `θ_av` and `|u₂|_av`.
//!
//! `α = d ln θ_av / d ln t` and `β = d ln |u₂|_av / d ln t` are estimated by
//! least squares over a sliding window of fixed width in decades of `t`.
//! Near the ends of the series the window is shifted inward so it keeps its
//! width. `β̄` is the trailing time average of `β`.

use thiserror::Error;

use crate::bgk::TimeSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("{field} must be positive: sample {index} at t = {time} has value {value}")]
    Domain {
        field: &'static str,
        index: usize,
        time: f64,
        value: f64,
    },
    #[error("times must be strictly increasing (sample {index})")]
    Unordered { index: usize },
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("window {0} must be positive and finite")]
    Window(f64),
    #[error("too few samples: window at t = {time} holds {count} points")]
    TooFewPoints { time: f64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    ThetaAv,
    U2Av,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::ThetaAv => "theta_av",
            Field::U2Av => "u2_av",
        }
    }
}

impl std::str::FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theta_av" => Ok(Field::ThetaAv),
            "u2_av" => Ok(Field::U2Av),
            other => Err(format!("unknown field '{other}' (expected theta_av or u2_av)")),
        }
    }
}

/// Plain `(t, θ_av, |u₂|_av)` samples, the common input of the fitters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrowthSeries {
    pub times: Vec<f64>,
    pub theta_av: Vec<f64>,
    pub u2_av: Vec<f64>,
}

impl GrowthSeries {
    pub fn field(&self, field: Field) -> &[f64] {
        match field {
            Field::ThetaAv => &self.theta_av,
            Field::U2Av => &self.u2_av,
        }
    }
}

impl From<&TimeSeries> for GrowthSeries {
    fn from(s: &TimeSeries) -> Self {
        Self {
            times: s.times.clone(),
            theta_av: s.theta_av.clone(),
            u2_av: s.u2_av.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlopeSeries {
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_bar: Vec<f64>,
    /// Slope window in decades.
    pub window: f64,
}

impl SlopeSeries {
    /// CSV with header `t,alpha,beta,beta_bar`. Missing columns are empty.
    pub fn to_csv(&self) -> String {
        let cell = |v: &[f64], k: usize| v.get(k).map(|x| format!("{x:.10e}")).unwrap_or_default();
        let mut out = String::from("t,alpha,beta,beta_bar\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.10e},{},{},{}\n",
                self.times[k],
                cell(&self.alpha, k),
                cell(&self.beta, k),
                cell(&self.beta_bar, k)
            ));
        }
        out
    }

    /// `α + |β|` per sample, reported alongside the exponents.
    pub fn alpha_plus_abs_beta(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a + b.abs()).collect()
    }
}

fn check_times(times: &[f64]) -> Result<(), DiagnosticsError> {
    for k in 1..times.len() {
        if !(times[k] > times[k - 1]) {
            return Err(DiagnosticsError::Unordered { index: k });
        }
    }
    Ok(())
}

/// Local least-squares slope of `ln value` against `ln t`.
///
/// Samples with `t ≤ 0` are skipped; the returned pairs are `(t, slope)`.
pub fn loglog_slope(
    times: &[f64],
    values: &[f64],
    window_decades: f64,
    field: &'static str,
) -> Result<(Vec<f64>, Vec<f64>), DiagnosticsError> {
    if times.len() != values.len() {
        return Err(DiagnosticsError::Length(times.len(), values.len()));
    }
    if !(window_decades > 0.0 && window_decades.is_finite()) {
        return Err(DiagnosticsError::Window(window_decades));
    }
    check_times(times)?;
    let start = times.partition_point(|&t| t <= 0.0);
    let mut lt = Vec::with_capacity(times.len() - start);
    let mut lv = Vec::with_capacity(times.len() - start);
    for k in start..times.len() {
        if !(values[k] > 0.0) || !values[k].is_finite() {
            return Err(DiagnosticsError::Domain {
                field,
                index: k,
                time: times[k],
                value: values[k],
            });
        }
        lt.push(times[k].ln());
        lv.push(values[k].ln());
    }
    let n = lt.len();
    if n < 3 {
        return Err(DiagnosticsError::TooFewPoints {
            time: times.last().copied().unwrap_or(0.0),
            count: n,
        });
    }
    let width = window_decades * std::f64::consts::LN_10;
    let (first, last) = (lt[0], lt[n - 1]);
    let mut slopes = Vec::with_capacity(n);
    for k in 0..n {
        let mut lo = (lt[k] - 0.5 * width).max(first);
        let hi = (lo + width).min(last);
        lo = (hi - width).max(first);
        let a = lt.partition_point(|&x| x < lo - 1e-12);
        let b = lt.partition_point(|&x| x <= hi + 1e-12);
        let count = b - a;
        if count < 3 {
            return Err(DiagnosticsError::TooFewPoints {
                time: times[start + k],
                count,
            });
        }
        let xs = &lt[a..b];
        let ys = &lv[a..b];
        let mx = xs.iter().sum::<f64>() / count as f64;
        let my = ys.iter().sum::<f64>() / count as f64;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        slopes.push(sxy / sxx);
    }
    Ok((times[start..].to_vec(), slopes))
}

/// Trailing mean over `[t − window, t]` by the trapezoid rule. Near the
/// start the window is truncated to the available span; the first sample
/// maps to itself.
pub fn windowed_average(
    times: &[f64],
    values: &[f64],
    window: f64,
) -> Result<Vec<f64>, DiagnosticsError> {
    if times.len() != values.len() {
        return Err(DiagnosticsError::Length(times.len(), values.len()));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(DiagnosticsError::Window(window));
    }
    check_times(times)?;
    let n = times.len();
    // cumulative trapezoid integral
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    let integral_to = |t: f64| -> f64 {
        let j = times.partition_point(|&s| s <= t).max(1) - 1;
        if j + 1 >= n {
            return cum[n - 1];
        }
        let w = (t - times[j]) / (times[j + 1] - times[j]);
        let v = values[j] + w * (values[j + 1] - values[j]);
        cum[j] + 0.5 * (values[j] + v) * (t - times[j])
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lo = (times[k] - window).max(times[0]);
        let span = times[k] - lo;
        if span <= 0.0 {
            out.push(values[k]);
        } else {
            out.push((cum[k] - integral_to(lo)) / span);
        }
    }
    Ok(out)
}

/// `α`, `β` and `β̄` for a growth series. `β` is omitted when `|u₂|_av`
/// is not positive at every `t > 0`; `β̄` needs `beta_window`.
pub fn slope_series(
    series: &GrowthSeries,
    window_decades: f64,
    beta_window: Option<f64>,
) -> Result<SlopeSeries, DiagnosticsError> {
    let (times, alpha) = loglog_slope(&series.times, &series.theta_av, window_decades, "theta_av")?;
    let beta = match loglog_slope(&series.times, &series.u2_av, window_decades, "u2_av") {
        Ok((_, b)) => b,
        Err(DiagnosticsError::Domain { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    let beta_bar = match beta_window {
        Some(w) if !beta.is_empty() => windowed_average(&times, &beta, w)?,
        _ => Vec::new(),
    };
    Ok(SlopeSeries {
        times,
        alpha,
        beta,
        beta_bar,
        window: window_decades,
    })
}

/// Slope of a single field, as used by `fit slope`.
pub fn field_slope(
    series: &GrowthSeries,
    field: Field,
    window_decades: f64,
) -> Result<SlopeSeries, DiagnosticsError> {
    let (times, slope) = loglog_slope(&series.times, series.field(field), window_decades, field.name())?;
    let mut out = SlopeSeries {
        times,
        window: window_decades,
        ..Default::default()
    };
    match field {
        Field::ThetaAv => out.alpha = slope,
        Field::U2Av => out.beta = slope,
    }
    Ok(out)
}

/// Log-spaced sample times, `per_decade` per decade, from `t0` to `t1`.
pub fn log_times(t0: f64, t1: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t1 / t0).log10();
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n)
        .map(|k| t0 * 10f64.powf(decades * k as f64 / n as f64))
        .collect()
}
