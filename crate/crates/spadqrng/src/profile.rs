//! Device profile files: `key = value` lines, `#` comments.
//!
//! ```text
//! rows = 128
//! cols = 128
//! eta_mean = 0.12
//! eta_tol = 0.03
//! p_dark = 8.45e-5
//! p_cross = 0.001
//! hot_pixels = random:512:0
//! lambda = click:0.5
//! ```
//!
//! `hot_pixels` is either a comma-separated index list (possibly empty) or
//! `random:count:seed`. `lambda` is a number, `click:p` (per-detector click
//! probability) or `ones:f` (ones-fraction over non-hot pixels). Missing keys
//! take the chip defaults.

use std::path::Path;

use sha2::{Digest, Sha256};
use spadqrng_core::source::{
    calibrate_lambda, calibrate_lambda_ones_fraction, random_hot_pixels, BiasAccounting, DeviceProfile,
    DEFAULT_P_CLICK,
};

use crate::error::{AppError, AppResult};

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    ClickProbability(f64),
    OnesFraction(f64),
}

fn config(msg: impl Into<String>) -> AppError {
    AppError::Config(msg.into())
}

fn number(key: &str, v: &str) -> AppResult<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| config(format!("{key}: expected a number, got {v:?}")))
}

fn integer(key: &str, v: &str) -> AppResult<usize> {
    v.parse().map_err(|_| config(format!("{key}: expected an integer, got {v:?}")))
}

fn parse_hot_pixels(v: &str, m: usize) -> AppResult<Vec<u32>> {
    if let Some(rest) = v.strip_prefix("random:") {
        let (count, seed) = rest
            .split_once(':')
            .ok_or_else(|| config("hot_pixels: expected random:count:seed"))?;
        let count = integer("hot_pixels", count)?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| config(format!("hot_pixels: bad seed {seed:?}")))?;
        if count > m {
            return Err(config(format!("hot_pixels: {count} hot pixels on {m} detectors")));
        }
        return Ok(random_hot_pixels(m, count, seed));
    }
    let mut list = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map_err(|_| config(format!("hot_pixels: bad index {s:?}"))))
        .collect::<AppResult<Vec<u32>>>()?;
    list.sort_unstable();
    list.dedup();
    Ok(list)
}

fn parse_lambda(v: &str) -> AppResult<LambdaSpec> {
    if let Some(p) = v.strip_prefix("click:") {
        Ok(LambdaSpec::ClickProbability(number("lambda", p)?))
    } else if let Some(f) = v.strip_prefix("ones:") {
        Ok(LambdaSpec::OnesFraction(number("lambda", f)?))
    } else {
        Ok(LambdaSpec::Value(number("lambda", v)?))
    }
}

/// Resolves the mean photon number for a profile whose other fields are set.
pub fn resolve_lambda(profile: &DeviceProfile, spec: &LambdaSpec) -> AppResult<f64> {
    Ok(match *spec {
        LambdaSpec::Value(l) => l,
        LambdaSpec::ClickProbability(p) => calibrate_lambda(profile, p)?,
        LambdaSpec::OnesFraction(f) => calibrate_lambda_ones_fraction(profile, f, BiasAccounting::ExcludeHot)?,
    })
}

pub fn parse_profile(text: &str) -> AppResult<DeviceProfile> {
    let mut p = DeviceProfile::chip_default();
    let mut hot: Option<String> = None;
    let mut lambda = LambdaSpec::ClickProbability(DEFAULT_P_CLICK);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "rows" => p.rows = integer(key, value)?,
            "cols" => p.cols = integer(key, value)?,
            "eta_mean" => p.eta_mean = number(key, value)?,
            "eta_tol" => p.eta_tol = number(key, value)?,
            "p_dark" => p.p_dark = number(key, value)?,
            "p_cross" => p.p_cross = number(key, value)?,
            "hot_pixels" => hot = Some(value.to_string()),
            "lambda" => lambda = parse_lambda(value)?,
            "frame_period_s" => p.timing.frame_period_s = number(key, value)?,
            "read_interval_s" => p.timing.read_interval_s = number(key, value)?,
            "word_rate_hz" => p.timing.word_rate_hz = number(key, value)?,
            _ => return Err(config(format!("line {}: unknown key {key:?}", lineno + 1))),
        }
    }
    let m = p.rows * p.cols;
    if m == 0 {
        return Err(config("empty detector geometry"));
    }
    p.hot_pixels = match hot {
        Some(v) => parse_hot_pixels(&v, m)?,
        None if m == DeviceProfile::chip_default().detectors() => p.hot_pixels,
        None => Vec::new(),
    };
    p.lambda = 0.0;
    p.validate().map_err(|e| config(e.to_string()))?;
    p.lambda = resolve_lambda(&p, &lambda)?;
    p.validate().map_err(|e| config(e.to_string()))?;
    Ok(p)
}

/// Canonical text form; parsing it gives back the same profile.
pub fn format_profile(p: &DeviceProfile) -> String {
    let hot: Vec<String> = p.hot_pixels.iter().map(|h| h.to_string()).collect();
    format!(
        "rows = {}\ncols = {}\neta_mean = {:?}\neta_tol = {:?}\np_dark = {:?}\np_cross = {:?}\n\
         lambda = {:?}\nframe_period_s = {:?}\nread_interval_s = {:?}\nword_rate_hz = {:?}\nhot_pixels = {}\n",
        p.rows,
        p.cols,
        p.eta_mean,
        p.eta_tol,
        p.p_dark,
        p.p_cross,
        p.lambda,
        p.timing.frame_period_s,
        p.timing.read_interval_s,
        p.timing.word_rate_hz,
        hot.join(",")
    )
}

/// SHA-256 of the canonical form, hex encoded.
pub fn profile_hash(p: &DeviceProfile) -> String {
    hex::encode(Sha256::digest(format_profile(p).as_bytes()))
}

pub fn load_profile(path: &Path) -> AppResult<DeviceProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_profile(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_chip_default() {
        let p = parse_profile("# nothing\n").unwrap();
        assert_eq!(p, DeviceProfile::chip_default());
    }

    #[test]
    fn canonical_form_round_trips() {
        let text = "rows = 8\ncols = 4\neta_mean = 0.2\neta_tol = 0\np_dark = 1e-3\np_cross = 0\n\
                    hot_pixels = 3, 1 ,7\nlambda = 12.5\n";
        let p = parse_profile(text).unwrap();
        assert_eq!(p.hot_pixels, [1, 3, 7]);
        assert_eq!(p.lambda, 12.5);
        let again = parse_profile(&format_profile(&p)).unwrap();
        assert_eq!(again, p);
        assert_eq!(profile_hash(&again), profile_hash(&p));
        let d = DeviceProfile::chip_default();
        assert_eq!(parse_profile(&format_profile(&d)).unwrap(), d);
    }

    #[test]
    fn lambda_calibration_modes() {
        let p = parse_profile("rows = 4\ncols = 4\np_dark = 0\neta_tol = 0\nlambda = click:0.5").unwrap();
        assert!((p.lambda - 16.0 * 2f64.ln() / 0.12).abs() < 1e-9);
        let p = parse_profile("lambda = ones:0.5036").unwrap();
        let f = spadqrng_core::source::expected_ones_fraction(&p, p.lambda, BiasAccounting::ExcludeHot);
        assert!((f - 0.5036).abs() < 1e-9);
    }

    #[test]
    fn errors_are_config_errors() {
        for bad in [
            "rows = x",
            "nonsense = 1",
            "no equals sign",
            "hot_pixels = random:5",
            "rows = 2\ncols = 2\nhot_pixels = 9",
            "eta_mean = 2",
            "lambda = click:1.5",
        ] {
            let e = parse_profile(bad).unwrap_err();
            assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG, "{bad}: {e}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = DeviceProfile::chip_default();
        let mut b = a.clone();
        b.p_cross = 0.0;
        assert_ne!(profile_hash(&a), profile_hash(&b));
        assert_eq!(profile_hash(&a).len(), 64);
    }
}
