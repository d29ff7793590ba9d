//! Depth accuracy over transparent regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DELTA_THRESHOLDS: [f64; 3] = [1.05, 1.10, 1.25];

/// Errors in meters (`rel` is dimensionless), accuracies in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub rel: f64,
    pub mae: f64,
    pub d105: f64,
    pub d110: f64,
    pub d125: f64,
    pub n: u64,
}

impl MetricsReport {
    pub fn deltas(&self) -> [f64; 3] {
        [self.d105, self.d110, self.d125]
    }

    /// Every float rounded to 6 significant digits.
    pub fn rounded(&self) -> Self {
        MetricsReport {
            rmse: round_sig(self.rmse),
            rel: round_sig(self.rel),
            mae: round_sig(self.mae),
            d105: round_sig(self.d105),
            d110: round_sig(self.d110),
            d125: round_sig(self.d125),
            n: self.n,
        }
    }

    /// Unweighted mean of per-sample reports; `n` is the total pixel count.
    pub fn mean(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::input("cannot aggregate zero reports"));
        }
        let k = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        Ok(MetricsReport {
            rmse: avg(|r| r.rmse),
            rel: avg(|r| r.rel),
            mae: avg(|r| r.mae),
            d105: avg(|r| r.d105),
            d110: avg(|r| r.d110),
            d125: avg(|r| r.d125),
            n: reports.iter().map(|r| r.n).sum(),
        })
    }
}

pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().unwrap_or(v)
}

/// Metrics over pixels where `mask == 1` and `gt > 0`. The accuracy
/// ratio is `max(p/g, g/p)` compared strictly against each threshold.
pub fn depth_metrics(pred: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<MetricsReport> {
    if pred.dims() != gt.dims() || gt.dims() != mask.dims() {
        return Err(Error::shape(format!(
            "metrics on pred {:?}, gt {:?}, mask {:?}",
            pred.dims(),
            gt.dims(),
            mask.dims()
        )));
    }
    let (mut se, mut ae, mut re) = (0.0, 0.0, 0.0);
    let mut hits = [0u64; 3];
    let mut n = 0u64;
    for ((&p, &g), &m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
        if m != 1.0 || g <= 0.0 {
            continue;
        }
        n += 1;
        let e = p - g;
        se += e * e;
        ae += e.abs();
        re += e.abs() / g;
        let ratio = (p / g).max(g / p);
        for (hit, t) in hits.iter_mut().zip(DELTA_THRESHOLDS) {
            if ratio < t {
                *hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::input("no masked pixels with ground truth to evaluate"));
    }
    let nf = n as f64;
    let pct = |h: u64| 100.0 * h as f64 / nf;
    Ok(MetricsReport {
        rmse: (se / nf).sqrt(),
        rel: re / nf,
        mae: ae / nf,
        d105: pct(hits[0]),
        d110: pct(hits[1]),
        d125: pct(hits[2]),
        n,
    })
}

/// JSON object with keys `rmse, rel, mae, d105, d110, d125, n` in that
/// order, floats at 6 significant digits.
pub fn report_to_json(r: &MetricsReport) -> String {
    serde_json::to_string(&r.rounded()).expect("report serializes")
}

pub fn report_from_json(text: &str) -> Result<MetricsReport> {
    Ok(serde_json::from_str(text)?)
}
