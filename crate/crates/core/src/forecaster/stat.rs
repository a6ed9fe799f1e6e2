//! Non-parametric statistical ensemble: mean of seasonal-naive, drift, and
//! simple-exponential-smoothing forecasts. Serves as a difficulty anchor;
//! its probe trace is flat.

/// Forecast `horizon` steps ahead from a univariate context.
pub fn ensemble_forecast(x: &[f64], horizon: usize) -> Vec<f64> {
    let l = x.len();
    let last = x[l - 1];

    // seasonal naive with season length min(horizon, L)
    let season = horizon.min(l).max(1);
    let seasonal = |h: usize| x[l - season + (h % season)];

    // drift: last value plus the average historical step
    let drift_slope = if l > 1 {
        (last - x[0]) / (l - 1) as f64
    } else {
        0.0
    };

    // simple exponential smoothing, alpha = 0.3, flat forecast
    let alpha = 0.3;
    let mut level = x[0];
    for &v in &x[1..] {
        level = alpha * v + (1.0 - alpha) * level;
    }

    (0..horizon)
        .map(|h| {
            let s = seasonal(h);
            let d = last + drift_slope * (h + 1) as f64;
            (s + d + level) / 3.0
        })
        .collect()
}
