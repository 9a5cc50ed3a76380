//! Color representations, CIEDE2000 distance, Fourier features, and
//! condition-constrained context sampling.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of colors in every reference-game context.
pub const CONTEXT_SIZE: usize = 3;

/// Dimension of [`FourierFeatures`]: 27 frequency triples, cosine and sine.
pub const FOURIER_DIM: usize = 54;

/// An sRGB color with channels normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Color {
    r: f64,
    g: f64,
    b: f64,
}

impl Color {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        for (channel, value) in [("r", r), ("g", g), ("b", b)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidColor { channel, value });
            }
        }
        Ok(Self { r, g, b })
    }

    /// Builds a color from 8-bit channels.
    pub fn from_rgb8(r: u8, g: u8, b: u8) -> Self {
        Self {
            r: f64::from(r) / 255.0,
            g: f64::from(g) / 255.0,
            b: f64::from(b) / 255.0,
        }
    }

    /// Parses `RRGGBB` or `#RRGGBB`.
    pub fn from_hex(hex: &str) -> Result<Self> {
        let digits = hex.trim_start_matches('#');
        let bad = || Error::Config(format!("invalid hex color `{hex}`"));
        if digits.len() != 6 {
            return Err(bad());
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).map_err(|_| bad());
        Ok(Self::from_rgb8(channel(0)?, channel(2)?, channel(4)?))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            r: rng.random::<f64>(),
            g: rng.random::<f64>(),
            b: rng.random::<f64>(),
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn channels(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn to_hsv(&self) -> HsvColor {
        rgb_to_hsv(*self)
    }

    pub fn to_lab(&self) -> Lab {
        rgb_to_lab(*self)
    }

    pub fn fourier(&self) -> FourierFeatures {
        fourier_features(*self)
    }
}

impl TryFrom<[f64; 3]> for Color {
    type Error = Error;

    fn try_from(c: [f64; 3]) -> Result<Self> {
        Self::new(c[0], c[1], c[2])
    }
}

impl From<Color> for [f64; 3] {
    fn from(c: Color) -> Self {
        c.channels()
    }
}

/// Hexcone HSV. Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvColor {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl HsvColor {
    pub fn to_rgb(&self) -> Color {
        hsv_to_rgb(*self)
    }
}

/// CIE L*a*b* coordinates (D65 reference white).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

/// Grayscale inputs get hue 0.
pub fn rgb_to_hsv(c: Color) -> HsvColor {
    let max = c.r.max(c.g).max(c.b);
    let min = c.r.min(c.g).min(c.b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == c.r {
        60.0 * ((c.g - c.b) / delta).rem_euclid(6.0)
    } else if max == c.g {
        60.0 * ((c.b - c.r) / delta + 2.0)
    } else {
        60.0 * ((c.r - c.g) / delta + 4.0)
    };
    HsvColor {
        h: if h >= 360.0 { h - 360.0 } else { h },
        s,
        v: max,
    }
}

pub fn hsv_to_rgb(hsv: HsvColor) -> Color {
    let h = hsv.h.rem_euclid(360.0) / 60.0;
    let chroma = hsv.v * hsv.s;
    let x = chroma * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = hsv.v - chroma;
    let clamp = |v: f64| (v + m).clamp(0.0, 1.0);
    Color {
        r: clamp(r),
        g: clamp(g),
        b: clamp(b),
    }
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

pub fn rgb_to_lab(c: Color) -> Lab {
    let r = srgb_to_linear(c.r);
    let g = srgb_to_linear(c.g);
    let b = srgb_to_linear(c.b);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;

    const EPSILON: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    let f = |t: f64| {
        if t > EPSILON {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let fx = f(x / D65_WHITE[0]);
    let fy = f(y / D65_WHITE[1]);
    let fz = f(z / D65_WHITE[2]);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// CIEDE2000 color difference between two sRGB colors.
pub fn ciede2000(a: Color, b: Color) -> f64 {
    ciede2000_lab(rgb_to_lab(a), rgb_to_lab(b))
}

/// CIEDE2000 color difference with unit weighting factors (kL = kC = kH = 1).
pub fn ciede2000_lab(x: Lab, y: Lab) -> f64 {
    const POW25_7: f64 = 6_103_515_625.0; // 25^7

    let c_bar = (x.chroma() + y.chroma()) / 2.0;
    let c_bar7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + POW25_7)).sqrt());

    let a1 = (1.0 + g) * x.a;
    let a2 = (1.0 + g) * y.a;
    let c1 = a1.hypot(x.b);
    let c2 = a2.hypot(y.b);

    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            b.atan2(a).to_degrees().rem_euclid(360.0)
        }
    };
    let h1 = hue(x.b, a1);
    let h2 = hue(y.b, a2);

    let delta_l = y.l - x.l;
    let delta_c = c2 - c1;
    let chroma_product = c1 * c2;
    let delta_h_angle = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2 - h1;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let delta_h = 2.0 * chroma_product.sqrt() * (delta_h_angle.to_radians() / 2.0).sin();

    let l_bar = (x.l + y.l) / 2.0;
    let c_bar_prime = (c1 + c2) / 2.0;
    let h_bar = if chroma_product == 0.0 {
        h1 + h2
    } else if (h1 - h2).abs() <= 180.0 {
        (h1 + h2) / 2.0
    } else if h1 + h2 < 360.0 {
        (h1 + h2 + 360.0) / 2.0
    } else {
        (h1 + h2 - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * (h_bar - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar).to_radians().cos()
        + 0.32 * (3.0 * h_bar + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar - 63.0).to_radians().cos();

    let l_offset = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l_offset / (20.0 + l_offset).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_prime;
    let s_h = 1.0 + 0.015 * c_bar_prime * t;

    let delta_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let c_bar_prime7 = c_bar_prime.powi(7);
    let r_c = 2.0 * (c_bar_prime7 / (c_bar_prime7 + POW25_7)).sqrt();
    let r_t = -(2.0 * delta_theta).to_radians().sin() * r_c;

    let tl = delta_l / s_l;
    let tc = delta_c / s_c;
    let th = delta_h / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th)
        .max(0.0)
        .sqrt()
}

/// Trigonometric feature expansion of a color over frequencies `{0,1,2}^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierFeatures(pub [f64; FOURIER_DIM]);

impl FourierFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cosines for the 27 triples `(j, k, l)` in lexicographic order, then sines.
pub fn fourier_features(c: Color) -> FourierFeatures {
    let mut f = [0.0; FOURIER_DIM];
    let mut idx = 0;
    for j in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                let phase = TAU * (j as f64 * c.r + k as f64 * c.g + l as f64 * c.b);
                f[idx] = phase.cos();
                f[idx + FOURIER_DIM / 2] = phase.sin();
                idx += 1;
            }
        }
    }
    FourierFeatures(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionThresholds {
    /// Distance at or below which two colors count as close.
    pub theta: f64,
    /// Minimum distance between any two context colors.
    pub epsilon: f64,
}

impl Default for ConditionThresholds {
    fn default() -> Self {
        Self {
            theta: 20.0,
            epsilon: 5.0,
        }
    }
}

impl ConditionThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon < self.theta {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "thresholds need 0 < epsilon < theta, got epsilon={} theta={}",
                self.epsilon, self.theta
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Far,
    Split,
    Close,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Far, Condition::Split, Condition::Close];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Far => "far",
            Condition::Split => "split",
            Condition::Close => "close",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "far" => Ok(Condition::Far),
            "split" => Ok(Condition::Split),
            "close" => Ok(Condition::Close),
            other => Err(Error::Config(format!("unknown condition `{other}`"))),
        }
    }
}

/// Pairwise distances of a context, indexed `[d01, d02, d12]`.
fn pairwise(labs: &[Lab; CONTEXT_SIZE]) -> [f64; 3] {
    [
        ciede2000_lab(labs[0], labs[1]),
        ciede2000_lab(labs[0], labs[2]),
        ciede2000_lab(labs[1], labs[2]),
    ]
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

fn pair_distance(d: &[f64; 3], i: usize, j: usize) -> f64 {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 1) => d[0],
        (0, 2) => d[1],
        _ => d[2],
    }
}

fn label(d: &[f64; 3], th: &ConditionThresholds) -> Condition {
    if d.iter().all(|&x| x > th.theta) {
        Condition::Far
    } else if d.iter().all(|&x| x <= th.theta) {
        Condition::Close
    } else {
        Condition::Split
    }
}

/// Exactly one distractor within `theta` of the target, the other farther.
fn is_target_split(d: &[f64; 3], target: usize, th: &ConditionThresholds) -> bool {
    let mut near = 0;
    for other in (0..CONTEXT_SIZE).filter(|&i| i != target) {
        if pair_distance(d, target, other) <= th.theta {
            near += 1;
        }
    }
    near == 1
}

/// Labels a context. Far and Close require all three pairwise distances
/// above (resp. at or below) `theta`; every other configuration is Split.
pub fn classify_condition(
    colors: &[Color; CONTEXT_SIZE],
    target: usize,
    th: &ConditionThresholds,
) -> Result<Condition> {
    let labs = colors.map(|c| c.to_lab());
    let d = pairwise(&labs);
    for (k, &(a, b)) in PAIRS.iter().enumerate() {
        if d[k] < th.epsilon {
            return Err(Error::PerceptibilityViolation {
                a,
                b,
                distance: d[k],
                epsilon: th.epsilon,
            });
        }
    }
    debug_assert!(target < CONTEXT_SIZE);
    Ok(label(&d, th))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledContext {
    pub colors: [Color; CONTEXT_SIZE],
    pub target: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ContextSampler {
    pub thresholds: ConditionThresholds,
    pub max_attempts: u64,
}

impl Default for ContextSampler {
    fn default() -> Self {
        Self {
            thresholds: ConditionThresholds::default(),
            max_attempts: 1_000_000,
        }
    }
}

impl ContextSampler {
    pub fn new(thresholds: ConditionThresholds) -> Self {
        Self {
            thresholds,
            ..Self::default()
        }
    }

    /// Rejection-samples a context of the requested condition with colors
    /// uniform over the RGB cube. The target index is drawn first.
    ///
    /// A triple is abandoned as soon as one of its pairs is out of range, which
    /// accepts exactly the same set as testing whole triples. Split contexts
    /// additionally need exactly one distractor within `theta` of the target.
    pub fn sample<R: Rng + ?Sized>(&self, cond: Condition, rng: &mut R) -> Result<SampledContext> {
        let th = self.thresholds;
        let target = rng.random_range(0..CONTEXT_SIZE);
        let pair_ok = |d: f64| -> bool {
            if d < th.epsilon {
                return false;
            }
            match cond {
                Condition::Far => d > th.theta,
                Condition::Close => d <= th.theta,
                Condition::Split => true,
            }
        };

        for _ in 0..self.max_attempts {
            let colors = [Color::random(rng), Color::random(rng), Color::random(rng)];
            let labs = colors.map(|c| c.to_lab());
            let d01 = ciede2000_lab(labs[0], labs[1]);
            if !pair_ok(d01) {
                continue;
            }
            let d02 = ciede2000_lab(labs[0], labs[2]);
            if !pair_ok(d02) {
                continue;
            }
            let d12 = ciede2000_lab(labs[1], labs[2]);
            if !pair_ok(d12) {
                continue;
            }
            let d = [d01, d02, d12];
            if cond == Condition::Split
                && !(label(&d, &th) == Condition::Split && is_target_split(&d, target, &th))
            {
                continue;
            }
            return Ok(SampledContext { colors, target });
        }
        Err(Error::SamplingBudgetExceeded {
            condition: cond.to_string(),
            attempts: self.max_attempts,
        })
    }
}

/// Convenience wrapper around [`ContextSampler::sample`].
pub fn sample_context<R: Rng + ?Sized>(
    cond: Condition,
    th: &ConditionThresholds,
    rng: &mut R,
) -> Result<SampledContext> {
    ContextSampler::new(*th).sample(cond, rng)
}

/// Angle helper used by tests and analysis code.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(r: f64, g: f64, b: f64) -> Color {
        Color::new(r, g, b).unwrap()
    }

    #[test]
    fn hsv_of_black_and_red() {
        assert_eq!(
            rgb_to_hsv(c(0.0, 0.0, 0.0)),
            HsvColor {
                h: 0.0,
                s: 0.0,
                v: 0.0
            }
        );
        assert_eq!(
            rgb_to_hsv(c(1.0, 0.0, 0.0)),
            HsvColor {
                h: 0.0,
                s: 1.0,
                v: 1.0
            }
        );
    }

    #[test]
    fn hsv_hand_computed() {
        // max = b = 0.75, min = 0.25, delta = 0.5: h = 60 * ((r - g)/delta + 4) = 210.
        let hsv = rgb_to_hsv(c(0.25, 0.5, 0.75));
        assert_abs_diff_eq!(hsv.h, 210.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hsv.s, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hsv.v, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn hsv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let color = Color::random(&mut rng);
            let back = color.to_hsv().to_rgb();
            for (x, y) in color.channels().iter().zip(back.channels()) {
                assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_channels() {
        assert!(Color::new(1.2, 0.0, 0.0).is_err());
        assert!(Color::new(0.0, -0.1, 0.0).is_err());
        assert!(serde_json::from_str::<Color>("[0.5, 0.5, 2.0]").is_err());
    }

    #[test]
    fn lab_of_white_and_black() {
        let white = c(1.0, 1.0, 1.0).to_lab();
        assert_abs_diff_eq!(white.l, 100.0, epsilon = 1e-3);
        assert_abs_diff_eq!(white.a, 0.0, epsilon = 1e-2);
        assert_abs_diff_eq!(white.b, 0.0, epsilon = 1e-2);
        let black = c(0.0, 0.0, 0.0).to_lab();
        assert_abs_diff_eq!(black.l, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ciede2000_identity_and_reference_pair() {
        let x = c(0.3, 0.6, 0.1);
        assert_eq!(ciede2000(x, x), 0.0);
        let d = ciede2000_lab(
            Lab::new(50.0, 2.6772, -79.7751),
            Lab::new(50.0, 0.0, -82.7485),
        );
        assert_abs_diff_eq!(d, 2.0425, epsilon = 1e-4);
    }

    #[test]
    fn ciede2000_symmetric_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = Color::random(&mut rng);
            let b = Color::random(&mut rng);
            let ab = ciede2000(a, b);
            assert!(ab >= 0.0);
            assert_abs_diff_eq!(ab, ciede2000(b, a), epsilon = 1e-10);
        }
    }

    #[test]
    fn fourier_zero_phase() {
        let f = fourier_features(c(0.0, 0.0, 0.0));
        assert!(f.0[..27].iter().all(|&x| x == 1.0));
        assert!(f.0[27..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fourier_half_period() {
        // Triple (1,0,0) is index 9 in lexicographic order.
        let f = fourier_features(c(0.5, 0.5, 0.5));
        assert_abs_diff_eq!(f.0[9], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.0[9 + 27], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fourier_hand_evaluated() {
        // Triple (1,2,1) is index 1*9 + 2*3 + 1 = 16; phase 0.2 + 0.8 + 0.8 = 1.8.
        let f = fourier_features(c(0.2, 0.4, 0.8));
        assert_abs_diff_eq!(f.0[16], (TAU * 1.8).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.0[16 + 27], (TAU * 1.8).sin(), epsilon = 1e-12);
        assert!(f.0.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn condition_parse_and_display() {
        for cond in Condition::ALL {
            assert_eq!(cond.to_string().parse::<Condition>().unwrap(), cond);
        }
        assert!("medium".parse::<Condition>().is_err());
    }

    #[test]
    fn thresholds_validate() {
        assert!(ConditionThresholds::default().validate().is_ok());
        assert!(ConditionThresholds {
            theta: 5.0,
            epsilon: 5.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn perceptibility_violation() {
        let a = c(0.5, 0.5, 0.5);
        let b = c(0.51, 0.5, 0.5);
        let z = c(0.0, 0.0, 1.0);
        let err = classify_condition(&[a, b, z], 0, &ConditionThresholds::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::PerceptibilityViolation { a: 0, b: 1, .. }
        ));
    }

    #[test]
    fn sampler_budget_error() {
        let sampler = ContextSampler {
            thresholds: ConditionThresholds::default(),
            max_attempts: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let failures = (0..50)
            .filter(|_| sampler.sample(Condition::Close, &mut rng).is_err())
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn sampled_contexts_classify() {
        let th = ConditionThresholds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for cond in Condition::ALL {
            for _ in 0..50 {
                let ctx = sample_context(cond, &th, &mut rng).unwrap();
                assert_eq!(
                    classify_condition(&ctx.colors, ctx.target, &th).unwrap(),
                    cond
                );
            }
        }
    }
}
