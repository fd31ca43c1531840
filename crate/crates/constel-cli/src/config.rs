//! Flat key=value run configuration with defaults < file < flag layering.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use constel::constellations::EnumerationParams;
use constel::matcher::MatchParams;

/// All tunable pipeline parameters in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub enumeration: EnumerationParams,
    pub matching: MatchParams,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            enumeration: EnumerationParams::default(),
            matching: MatchParams::default(),
        }
    }
}

/// Flag overrides shared by every subcommand; `None` means "not given".
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigFlags {
    /// Config file of `key = value` lines ('#' starts a comment). Falls
    /// back to the CONSTEL_CONFIG environment variable when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Constellation size (points per descriptor).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Neighborhood size constellations are drawn from.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Descriptor-space search radius.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Minimum votes for a candidate correspondence.
    #[arg(long = "min-votes", global = true)]
    pub min_votes: Option<u32>,
    /// Pairwise distance consistency tolerance.
    #[arg(long = "clique-eps", global = true)]
    pub clique_eps: Option<f64>,
    /// Inlier threshold for robust pose fitting (m).
    #[arg(long = "ransac-thresh", global = true)]
    pub ransac_thresh: Option<f64>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Defaults, then the config file (explicit flag, else CONSTEL_CONFIG
    /// if set), then individual flag overrides.
    pub fn resolve(flags: &ConfigFlags) -> Result<RunConfig, String> {
        let mut config = RunConfig::default();
        let path = flags.config.clone().or_else(|| {
            std::env::var_os("CONSTEL_CONFIG").map(PathBuf::from)
        });
        if let Some(path) = path {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            config
                .apply_file(&text)
                .map_err(|e| format!("config {}: {e}", path.display()))?;
        }
        config.apply_flags(flags);
        Ok(config)
    }

    fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`", lineno + 1));
            };
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: Display,
        {
            value
                .parse::<T>()
                .map_err(|e| format!("invalid value for {key}: {e}"))
        }
        fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, String>
        where
            T::Err: Display,
        {
            if value.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                parse::<T>(key, value).map(Some)
            }
        }
        match key {
            "k" => self.enumeration.k = parse(key, value)?,
            "n" => self.enumeration.n = parse(key, value)?,
            "min_frames" => self.enumeration.min_frames = parse(key, value)?,
            "max_per_anchor" => self.enumeration.max_per_anchor = parse_optional(key, value)?,
            "tau" => self.matching.tau = parse(key, value)?,
            "min_votes" => self.matching.min_votes = parse(key, value)?,
            "clique_epsilon" => self.matching.clique_epsilon = parse(key, value)?,
            "completion_radius" => {
                self.matching.completion_radius = parse_optional(key, value)?
            }
            "candidates_m" => self.matching.candidates_m = parse(key, value)?,
            "window" => self.matching.window = parse_optional(key, value)?,
            "inlier_threshold" => self.matching.ransac.inlier_threshold = parse(key, value)?,
            "max_iterations" => self.matching.ransac.max_iterations = parse(key, value)?,
            "confidence" => self.matching.ransac.confidence = parse(key, value)?,
            "min_inliers" => self.matching.ransac.min_inliers = parse(key, value)?,
            "seed" => self.matching.seed = parse(key, value)?,
            unknown => return Err(format!("unknown config key `{unknown}`")),
        }
        Ok(())
    }

    fn apply_flags(&mut self, flags: &ConfigFlags) {
        if let Some(k) = flags.k {
            self.enumeration.k = k;
        }
        if let Some(n) = flags.n {
            self.enumeration.n = n;
        }
        if let Some(tau) = flags.tau {
            self.matching.tau = tau;
        }
        if let Some(min_votes) = flags.min_votes {
            self.matching.min_votes = min_votes;
        }
        if let Some(eps) = flags.clique_eps {
            self.matching.clique_epsilon = eps;
        }
        if let Some(thresh) = flags.ransac_thresh {
            self.matching.ransac.inlier_threshold = thresh;
        }
        if let Some(seed) = flags.seed {
            self.matching.seed = seed;
        }
    }
}

/// Parses a value grid: a single number, a comma list, or `start:end:step`
/// (inclusive of the end within half a step).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty grid".into());
    }
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{text}` must be start:end:step"));
        }
        let start: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|e| format!("grid start: {e}"))?;
        let end: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|e| format!("grid end: {e}"))?;
        let step: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|e| format!("grid step: {e}"))?;
        if !step.is_finite() || step <= 0.0 {
            return Err(format!("grid step must be positive, got {step}"));
        }
        if end < start {
            return Err(format!("grid end {end} is before start {start}"));
        }
        let count = ((end - start) / step).round() as usize + 1;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| format!("grid value `{part}`: {e}"))
        })
        .collect()
}
