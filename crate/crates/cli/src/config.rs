//! Flat `key = value` configuration with dotted keys.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use roadstereo::dispxform::RollOptions;
use roadstereo::imgcore::DisparityFormat;
use roadstereo::matcher::MatcherParams;
use roadstereo::perspective::{CorrespondenceParams, GroundPlaneShiftModel};
use roadstereo::synthcam::{Defect, SceneSpec};
use roadstereo::PixelCoord;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Splits config text into `(key, value)` pairs in file order. Blank lines
/// and everything after `#` are ignored.
pub fn parse_config_text(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!("{origin}:{}: expected `key = value`", idx + 1)));
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError(format!("{origin}:{}: bad key `{key}`", idx + 1)));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Parses a `--set key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            _ => Err(ConfigError(format!("unknown report format `{s}`"))),
        }
    }
}

/// Scene description for `synth`. The plane follows from the requested
/// disparity range unless pitch and baseline are both given.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSettings {
    pub width: usize,
    pub height: usize,
    pub d_top: f64,
    pub d_bottom: f64,
    pub psi: f64,
    pub seed: u64,
    pub noise_sigma: f64,
    pub defects: Vec<Defect>,
    pub f: Option<f64>,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub t_c: Option<f64>,
    pub n_x: Option<f64>,
}

impl Default for SceneSettings {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            d_top: 12.0,
            d_bottom: 40.0,
            psi: 0.0,
            seed: 1,
            noise_sigma: 0.0,
            defects: Vec::new(),
            f: None,
            beta: None,
            theta: None,
            t_c: None,
            n_x: None,
        }
    }
}

impl SceneSettings {
    pub fn to_spec(&self) -> SceneSpec {
        let mut spec = SceneSpec::road_scene(self.width, self.height, self.d_top, self.d_bottom, self.psi, self.seed);
        spec.noise_sigma = self.noise_sigma;
        spec.defects = self.defects.clone();
        if let Some(f) = self.f {
            spec.f = f;
        }
        if let Some(beta) = self.beta {
            spec.beta = beta;
        }
        if let Some(theta) = self.theta {
            spec.theta = theta;
        }
        if let Some(t_c) = self.t_c {
            spec.t_c = t_c;
        }
        if let Some(n_x) = self.n_x {
            spec.n_x = n_x;
        }
        spec
    }
}

/// `u,v,radius,offset` entries separated by `;`.
pub fn parse_defects(s: &str) -> Result<Vec<Defect>, ConfigError> {
    let mut out = Vec::new();
    for item in s.split(';').map(str::trim).filter(|x| !x.is_empty()) {
        let parts: Vec<&str> = item.split(',').map(str::trim).collect();
        let bad = || ConfigError(format!("defect `{item}` must be u,v,radius,offset"));
        if parts.len() != 4 {
            return Err(bad());
        }
        out.push(Defect {
            center: PixelCoord::new(parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?),
            radius: parts[2].parse().map_err(|_| bad())?,
            depth_offset: parts[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub matcher: MatcherParams,
    pub correspondence: CorrespondenceParams,
    /// Fixed row-shift model; skips the sparse search when set.
    pub kappa: (Option<f64>, Option<f64>),
    pub roll: RollOptions<f64>,
    pub trim: bool,
    pub delta_t: f64,
    pub epsilon_d: f64,
    pub mask: Option<PathBuf>,
    pub format: DisparityFormat,
    pub report_format: ReportFormat,
    pub timing: bool,
    pub threads: Option<usize>,
    pub scene: SceneSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            matcher: MatcherParams::default(),
            correspondence: CorrespondenceParams::default(),
            kappa: (None, None),
            roll: RollOptions::default(),
            trim: false,
            delta_t: 30.0,
            epsilon_d: 2.0,
            mask: None,
            format: DisparityFormat::Pfm,
            report_format: ReportFormat::Text,
            timing: false,
            threads: None,
            scene: SceneSettings::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError(format!("bad value `{raw}` for `{key}`")))
}

fn flag(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError(format!("bad boolean `{raw}` for `{key}`"))),
    }
}

impl PipelineConfig {
    /// Applies one entry; unknown keys are errors.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "matcher.window_radius" => self.matcher.window_radius = value(key, raw)?,
            "matcher.aggregation_radius" => self.matcher.aggregation_radius = value(key, raw)?,
            "matcher.d_max" => self.matcher.d_max = value(key, raw)?,
            "matcher.sigma0" => self.matcher.sigma0 = value(key, raw)?,
            "matcher.sigma1" => self.matcher.sigma1 = value(key, raw)?,
            "matcher.delta_r" => self.matcher.delta_r = value(key, raw)?,
            "perspective.window" => self.correspondence.window = value(key, raw)?,
            "perspective.max_shift" => self.correspondence.max_shift = value(key, raw)?,
            "perspective.response_threshold" => self.correspondence.response_threshold = value(key, raw)?,
            "perspective.stride" => self.correspondence.stride = value(key, raw)?,
            "perspective.min_correlation" => self.correspondence.min_correlation = value(key, raw)?,
            "perspective.kappa0" => self.kappa.0 = Some(value(key, raw)?),
            "perspective.kappa1" => self.kappa.1 = Some(value(key, raw)?),
            "roll.lambda0" => self.roll.lambda0 = value(key, raw)?,
            "roll.delta_psi" => self.roll.delta_psi = value(key, raw)?,
            "roll.max_iters" => self.roll.max_iters = value(key, raw)?,
            "roll.psi_init" => self.roll.psi_init = value(key, raw)?,
            "roll.trim" => self.trim = flag(key, raw)?,
            "transform.delta_t" => self.delta_t = value(key, raw)?,
            "eval.epsilon_d" => self.epsilon_d = value(key, raw)?,
            "io.mask" => self.mask = (!raw.is_empty()).then(|| PathBuf::from(raw)),
            "io.format" => {
                self.format = raw
                    .parse()
                    .map_err(|_| ConfigError(format!("unknown disparity format `{raw}`")))?
            }
            "io.report_format" => self.report_format = raw.parse()?,
            "timing" => self.timing = flag(key, raw)?,
            "threads" => self.threads = Some(value(key, raw)?),
            "scene.width" => self.scene.width = value(key, raw)?,
            "scene.height" => self.scene.height = value(key, raw)?,
            "scene.d_top" => self.scene.d_top = value(key, raw)?,
            "scene.d_bottom" => self.scene.d_bottom = value(key, raw)?,
            "scene.psi" => self.scene.psi = value(key, raw)?,
            "scene.seed" => self.scene.seed = value(key, raw)?,
            "scene.noise_sigma" => self.scene.noise_sigma = value(key, raw)?,
            "scene.defects" => self.scene.defects = parse_defects(raw)?,
            "scene.f" => self.scene.f = Some(value(key, raw)?),
            "scene.beta" => self.scene.beta = Some(value(key, raw)?),
            "scene.theta" => self.scene.theta = Some(value(key, raw)?),
            "scene.t_c" => self.scene.t_c = Some(value(key, raw)?),
            "scene.n_x" => self.scene.n_x = Some(value(key, raw)?),
            _ => return Err(ConfigError(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, entries: impl IntoIterator<Item = &'a (String, String)>) -> Result<(), ConfigError> {
        for (k, v) in entries {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Checks every embedded parameter set.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: roadstereo::Error| ConfigError(e.to_string());
        self.matcher.validate().map_err(wrap)?;
        self.roll.validate().map_err(wrap)?;
        if !self.delta_t.is_finite() {
            return Err(ConfigError("transform.delta_t must be finite".into()));
        }
        if !(self.epsilon_d >= 0.0) {
            return Err(ConfigError("eval.epsilon_d must be non-negative".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError("threads must be at least 1".into()));
        }
        if self.kappa.0.is_some() != self.kappa.1.is_some() {
            return Err(ConfigError("perspective.kappa0 and perspective.kappa1 go together".into()));
        }
        Ok(())
    }

    pub fn fixed_shift(&self, height: usize) -> Option<GroundPlaneShiftModel<f64>> {
        match self.kappa {
            (Some(k0), Some(k1)) => Some(GroundPlaneShiftModel::with_offset_for_height(k0, k1, height)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# header\nmatcher.sigma0 = 2.5   # wider\n\n  roll.trim=true\n";
        let entries = parse_config_text(text, "t").unwrap();
        assert_eq!(
            entries,
            vec![
                ("matcher.sigma0".to_string(), "2.5".to_string()),
                ("roll.trim".to_string(), "true".to_string())
            ]
        );
        let mut cfg = PipelineConfig::default();
        cfg.apply_all(&entries).unwrap();
        assert_eq!(cfg.matcher.sigma0, 2.5);
        assert!(cfg.trim);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse_config_text("just words", "t").is_err());
        assert!(parse_config_text("= 3", "t").is_err());
        let mut cfg = PipelineConfig::default();
        assert!(cfg.set("matcher.nope", "1").is_err());
        assert!(cfg.set("matcher.d_max", "-3").is_err());
        assert!(cfg.set("roll.trim", "maybe").is_err());
    }

    #[test]
    fn defaults_match_documented_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.matcher.sigma0, 1.5);
        assert_eq!(cfg.matcher.sigma1, 5.5);
        assert_eq!(cfg.matcher.delta_r, 1.0);
        assert_eq!(cfg.matcher.d_max, 30);
        assert_eq!(cfg.roll.lambda0, 10.0);
        assert_eq!(cfg.roll.delta_psi, std::f64::consts::PI / 1.8e6);
        assert_eq!(cfg.roll.psi_init, 0.0);
        assert_eq!(cfg.delta_t, 30.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn defect_list() {
        let d = parse_defects("10,20,5,1.5; 30,40,3,-2").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].center, PixelCoord::new(30, 40));
        assert_eq!(d[1].depth_offset, -2.0);
        assert!(parse_defects("1,2,3").is_err());
        assert!(parse_defects("").unwrap().is_empty());
    }

    #[test]
    fn validation_catches_invariants() {
        let mut cfg = PipelineConfig::default();
        cfg.set("matcher.sigma1", "0").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.set("perspective.kappa0", "3").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("perspective.kappa1", "0.1").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.fixed_shift(10).unwrap().kappa0, 3.0);
    }
}
