//! Test statistics built from least-squares fits of residual outcomes on own
//! treatment and peer exposure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which tail of the exposure coefficient counts as extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sides {
    #[default]
    TwoSided,
    Greater,
    Less,
}

impl Sides {
    fn apply(self, coef: f64) -> f64 {
        match self {
            Sides::TwoSided => coef.abs(),
            Sides::Greater => coef,
            Sides::Less => -coef,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Sides::TwoSided => "",
            Sides::Greater => "_greater",
            Sides::Less => "_less",
        }
    }
}

/// Statistic `T(ỹ, z, exposure)`; larger values are more extreme. `None`
/// signals a degenerate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestStatistic {
    /// Exposure coefficient from OLS of `ỹ` on `(1, z, T)`.
    Score { sides: Sides },
    /// Exposure coefficient from OLS of `ỹ` on `(1, T)`, without adjusting
    /// for own treatment.
    Slope { sides: Sides },
    /// F statistic of the joint fit of `ỹ` on `(z, T)`.
    F,
}

impl Default for TestStatistic {
    fn default() -> Self {
        TestStatistic::Score { sides: Sides::TwoSided }
    }
}

impl TestStatistic {
    pub fn evaluate(&self, y: &[f64], z: &[u8], t: &[f64]) -> Option<f64> {
        match *self {
            TestStatistic::Score { sides } => joint_fit(y, z, t).map(|f| sides.apply(f.coef_exposure)),
            TestStatistic::Slope { sides } => exposure_slope(y, t).map(|c| sides.apply(c)),
            TestStatistic::F => joint_fit(y, z, t).and_then(|f| f.f_statistic()),
        }
    }
}

impl fmt::Display for TestStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestStatistic::Score { sides } => write!(f, "score{}", sides.suffix()),
            TestStatistic::Slope { sides } => write!(f, "slope{}", sides.suffix()),
            TestStatistic::F => f.write_str("F"),
        }
    }
}

impl From<TestStatistic> for String {
    fn from(s: TestStatistic) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for TestStatistic {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for TestStatistic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, sides) = if let Some(b) = s.strip_suffix("_greater") {
            (b, Sides::Greater)
        } else if let Some(b) = s.strip_suffix("_less") {
            (b, Sides::Less)
        } else {
            (s, Sides::TwoSided)
        };
        match base {
            "score" => Ok(TestStatistic::Score { sides }),
            "slope" => Ok(TestStatistic::Slope { sides }),
            "F" | "f" if sides == Sides::TwoSided => Ok(TestStatistic::F),
            _ => Err(format!("unknown statistic {s:?} (expected score, slope or F, optionally _greater/_less)")),
        }
    }
}

/// OLS fit of `y` on `(1, z, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointFit {
    pub intercept: f64,
    pub coef_treatment: f64,
    pub coef_exposure: f64,
    pub rss: f64,
    pub tss: f64,
    pub n: usize,
}

impl JointFit {
    /// `((TSS − RSS)/2) / (RSS/(n − 3))`.
    pub fn f_statistic(&self) -> Option<f64> {
        if self.n <= 3 {
            return None;
        }
        let explained = (self.tss - self.rss).max(0.0);
        if self.rss <= f64::EPSILON * self.tss {
            return Some(if explained > 0.0 { f64::INFINITY } else { 0.0 });
        }
        Some((explained / 2.0) / (self.rss / (self.n - 3) as f64))
    }
}

// 1 − corr(z, t)² below this counts as collinear.
const COLLINEAR: f64 = 1e-10;

fn negligible(ss: f64, raw: f64) -> bool {
    ss <= 1e-12 * raw.max(f64::MIN_POSITIVE)
}

/// Least squares of `y` on an intercept, `z` and `t` via centered normal
/// equations. `None` when the design matrix is rank deficient.
pub fn joint_fit(y: &[f64], z: &[u8], t: &[f64]) -> Option<JointFit> {
    let n = y.len();
    debug_assert!(z.len() == n && t.len() == n);
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let my = y.iter().sum::<f64>() / nf;
    let mz = z.iter().map(|&v| f64::from(v)).sum::<f64>() / nf;
    let mt = t.iter().sum::<f64>() / nf;
    let (mut szz, mut stt, mut szt, mut szy, mut sty, mut syy, mut raw_t) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let dz = f64::from(z[i]) - mz;
        let dt = t[i] - mt;
        let dy = y[i] - my;
        szz += dz * dz;
        stt += dt * dt;
        szt += dz * dt;
        szy += dz * dy;
        sty += dt * dy;
        syy += dy * dy;
        raw_t += t[i] * t[i];
    }
    if szz == 0.0 || negligible(stt, raw_t) {
        return None;
    }
    let det = szz * stt - szt * szt;
    if det <= COLLINEAR * szz * stt {
        return None;
    }
    let coef_treatment = (stt * szy - szt * sty) / det;
    let coef_exposure = (szz * sty - szt * szy) / det;
    let rss = (syy - coef_treatment * szy - coef_exposure * sty).max(0.0);
    Some(JointFit {
        intercept: my - coef_treatment * mz - coef_exposure * mt,
        coef_treatment,
        coef_exposure,
        rss,
        tss: syy,
        n,
    })
}

/// Slope from least squares of `y` on `(1, t)`.
pub fn exposure_slope(y: &[f64], t: &[f64]) -> Option<f64> {
    let n = y.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let my = y.iter().sum::<f64>() / nf;
    let mt = t.iter().sum::<f64>() / nf;
    let (mut stt, mut sty, mut raw_t) = (0.0, 0.0, 0.0);
    for (yi, ti) in y.iter().zip(t) {
        let dt = ti - mt;
        stt += dt * dt;
        sty += dt * (yi - my);
        raw_t += ti * ti;
    }
    if negligible(stt, raw_t) {
        return None;
    }
    Some(sty / stt)
}
