//! Experiment configuration: a line-oriented `section.key = value` format
//! with `#` comments.
//!
//! Parsing validates everything it can and reports all violations at once.
//! `canonical_text` renders every key (defaults included) in a fixed order,
//! so `parse(print(config)) == config` and the FNV-1a hash of that text
//! identifies the configuration in result tables.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::{BaseKind, CocycleKind, FactorKind, FamilyKind, KernelParams};
use crate::lepage::SeriesParams;
use crate::quad::{DEFAULT_CELL_BUDGET, DEFAULT_RESOLUTION};
use crate::stable::StableIndex;

/// What a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    Simulate,
    Classify,
    Maxima,
    LimitTest,
    ConditionCheck,
    Report,
}

impl FromStr for Operation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simulate" => Ok(Operation::Simulate),
            "classify" => Ok(Operation::Classify),
            "maxima" => Ok(Operation::Maxima),
            "limit-test" => Ok(Operation::LimitTest),
            "condition-check" => Ok(Operation::ConditionCheck),
            "report" => Ok(Operation::Report),
            other => Err(format!(
                "unknown operation '{other}' (expected simulate, classify, maxima, \
                 limit-test, condition-check or report)"
            )),
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Operation::Simulate => "simulate",
            Operation::Classify => "classify",
            Operation::Maxima => "maxima",
            Operation::LimitTest => "limit-test",
            Operation::ConditionCheck => "condition-check",
            Operation::Report => "report",
        };
        write!(f, "{s}")
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub operation: Operation,
    pub kernel: KernelParams,
    /// Dyadic lattice level n; spacing 2^-n.
    pub level: u32,
    /// Simulation window; defaults to the largest ladder rung.
    pub window: f64,
    pub ladder: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub pairs: usize,
    pub series: SeriesParams,
    pub resolution: u32,
    pub cell_budget: usize,
    pub output: Option<PathBuf>,
}

const VALID_KEYS: &[&str] = &[
    "experiment.name",
    "run.operation",
    "run.seed",
    "run.replications",
    "run.ladder",
    "run.epsilon",
    "run.pairs",
    "run.terms",
    "run.calibration",
    "run.tail-compensation",
    "kernel.family",
    "kernel.alpha",
    "kernel.dimension",
    "kernel.base",
    "kernel.support",
    "kernel.tabulated",
    "kernel.cocycle",
    "kernel.amplitude",
    "kernel.speed",
    "kernel.factors",
    "lattice.level",
    "lattice.window",
    "quad.resolution",
    "quad.cell-budget",
    "output.path",
];

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn nearest_key(key: &str) -> &'static str {
    VALID_KEYS
        .iter()
        .min_by_key(|k| edit_distance(key, k))
        .unwrap()
}

/// Raw key-value pairs, one slot per valid key, before validation.
#[derive(Default)]
struct RawConfig {
    values: std::collections::HashMap<String, String>,
}

struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn into_error(self) -> Option<Error> {
        if self.0.is_empty() {
            None
        } else {
            Some(Error::Config(format!(
                "{} violation(s):\n  - {}",
                self.0.len(),
                self.0.join("\n  - ")
            )))
        }
    }
}

fn scan(text: &str, violations: &mut Violations) -> RawConfig {
    let mut raw = RawConfig::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            violations.push(format!(
                "line {}: expected 'section.key = value', got '{line}'",
                lineno + 1
            ));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if !VALID_KEYS.contains(&key) {
            violations.push(format!(
                "line {}: unknown key '{key}' (nearest valid key: '{}')",
                lineno + 1,
                nearest_key(key)
            ));
            continue;
        }
        if raw
            .values
            .insert(key.to_string(), value.to_string())
            .is_some()
        {
            violations.push(format!("line {}: duplicate key '{key}'", lineno + 1));
        }
    }
    raw
}

impl RawConfig {
    fn take<T: FromStr>(
        &mut self,
        key: &str,
        default: T,
        violations: &mut Violations,
    ) -> T
    where
        T::Err: fmt::Display,
    {
        match self.values.remove(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(parsed) => parsed,
                Err(e) => {
                    violations.push(format!("key '{key}': {e}"));
                    default
                }
            },
        }
    }

    fn take_list(&mut self, key: &str, violations: &mut Violations) -> Option<Vec<f64>> {
        let v = self.values.remove(key)?;
        let mut out = Vec::new();
        for part in v.split(',') {
            match part.trim().parse::<f64>() {
                Ok(x) => out.push(x),
                Err(_) => {
                    violations.push(format!(
                        "key '{key}': '{}' is not a number",
                        part.trim()
                    ));
                    return None;
                }
            }
        }
        Some(out)
    }
}

/// Parse and validate a configuration, reporting every violation found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_with_overrides(text, None, None)
}

/// Like `parse_config`, with command-line overrides applied before
/// validation: an override seed satisfies the seed requirement, an
/// override operation replaces the configured one.
pub fn parse_with_overrides(
    text: &str,
    seed: Option<u64>,
    operation: Option<Operation>,
) -> Result<ExperimentConfig> {
    let mut violations = Violations(Vec::new());
    let mut raw = scan(text, &mut violations);

    let experiment = raw
        .values
        .remove("experiment.name")
        .unwrap_or_else(|| "default".to_string());
    let parsed_operation = raw.take("run.operation", Operation::Simulate, &mut violations);
    let operation = operation.unwrap_or(parsed_operation);

    let config_seed = match raw.values.remove("run.seed") {
        Some(v) => match v.parse::<u64>() {
            Ok(s) => Some(s),
            Err(_) => {
                violations.push(format!("key 'run.seed': '{v}' is not an unsigned integer"));
                None
            }
        },
        None => None,
    };
    let seed = match seed.or(config_seed) {
        Some(s) => s,
        None => {
            violations.push("run.seed is required; unseeded runs are not reproducible");
            0
        }
    };

    let replications = raw.take("run.replications", 100usize, &mut violations);
    let ladder = raw
        .take_list("run.ladder", &mut violations)
        .unwrap_or_else(|| vec![25.0, 50.0, 100.0, 200.0]);
    let epsilon = raw.take("run.epsilon", 0.5f64, &mut violations);
    let pairs = raw.take("run.pairs", 2000usize, &mut violations);
    let terms = match raw.values.remove("run.terms") {
        None => None,
        Some(v) if v == "auto" => None,
        Some(v) => match v.parse::<usize>() {
            Ok(t) => Some(t),
            Err(_) => {
                violations.push(format!(
                    "key 'run.terms': '{v}' is neither 'auto' nor an unsigned integer"
                ));
                None
            }
        },
    };
    let calibration = raw.take("run.calibration", 200_000usize, &mut violations);
    let tail_compensation = raw.take("run.tail-compensation", true, &mut violations);

    let family = raw.take("kernel.family", FamilyKind::Translation, &mut violations);
    let alpha = raw.take("kernel.alpha", 1.5f64, &mut violations);
    let dimension = raw.take("kernel.dimension", 1usize, &mut violations);
    let base = raw.take("kernel.base", BaseKind::Indicator, &mut violations);
    let support = match raw.take_list("kernel.support", &mut violations) {
        None => (0.0, 1.0),
        Some(v) if v.len() == 2 => (v[0], v[1]),
        Some(v) => {
            violations.push(format!(
                "key 'kernel.support': expected 'lo, hi', got {} value(s)",
                v.len()
            ));
            (0.0, 1.0)
        }
    };
    let tabulated = raw
        .take_list("kernel.tabulated", &mut violations)
        .unwrap_or_default();
    let cocycle = raw.take("kernel.cocycle", CocycleKind::Trivial, &mut violations);
    let amplitude = raw.take("kernel.amplitude", 1.0f64, &mut violations);
    let speed = raw.take(
        "kernel.speed",
        std::f64::consts::FRAC_1_SQRT_2,
        &mut violations,
    );
    let factors = match raw.values.remove("kernel.factors") {
        None => Vec::new(),
        Some(v) => {
            let mut out = Vec::new();
            for part in v.split(',') {
                match part.trim().parse::<FactorKind>() {
                    Ok(f) => out.push(f),
                    Err(e) => violations.push(format!("key 'kernel.factors': {e}")),
                }
            }
            out
        }
    };

    let level = raw.take("lattice.level", 2u32, &mut violations);
    let window = match raw.values.remove("lattice.window") {
        None => ladder.iter().copied().fold(1.0_f64, f64::max),
        Some(v) => match v.parse::<f64>() {
            Ok(w) => w,
            Err(_) => {
                violations.push(format!("key 'lattice.window': '{v}' is not a number"));
                1.0
            }
        },
    };

    let resolution = raw.take("quad.resolution", DEFAULT_RESOLUTION, &mut violations);
    let cell_budget = raw.take("quad.cell-budget", DEFAULT_CELL_BUDGET, &mut violations);
    let output = raw.values.remove("output.path").map(PathBuf::from);

    // Cross-field validation, all violations collected.
    if let Err(e) = StableIndex::new(alpha) {
        violations.push(format!("key 'kernel.alpha': {e}"));
    }
    if ladder.is_empty() {
        violations.push("run.ladder must not be empty");
    }
    if ladder.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        violations.push(format!(
            "run.ladder rungs must be finite and positive, got {ladder:?}"
        ));
    } else if ladder.windows(2).any(|w| w[0] >= w[1]) {
        violations.push(format!("run.ladder not increasing: {ladder:?}"));
    }
    if replications == 0 {
        violations.push("run.replications must be at least 1");
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        violations.push(format!(
            "run.epsilon must be finite and positive, got {epsilon}"
        ));
    }
    if !(window.is_finite() && window > 0.0) {
        violations.push(format!(
            "lattice.window must be finite and positive, got {window}"
        ));
    }
    if ladder.iter().any(|t| *t > window * (1.0 + 1e-12)) {
        violations.push(format!(
            "run.ladder reaches beyond lattice.window = {window}: {ladder:?}"
        ));
    }
    if experiment.is_empty() || experiment.contains(',') || experiment.contains('\n') {
        violations.push(format!(
            "experiment.name must be a nonempty single-line name without commas, \
             got '{experiment}'"
        ));
    }

    if let Some(err) = violations.into_error() {
        return Err(err);
    }

    Ok(ExperimentConfig {
        experiment,
        operation,
        kernel: KernelParams {
            family,
            alpha,
            dimension,
            base,
            support,
            tabulated,
            cocycle,
            amplitude,
            speed,
            factors,
        },
        level,
        window,
        ladder,
        replications,
        seed,
        epsilon,
        pairs,
        series: SeriesParams {
            terms,
            calibration_replications: calibration,
            tail_compensation,
            ..SeriesParams::default()
        },
        resolution,
        cell_budget,
        output,
    })
}

fn fmt_f64(x: f64) -> String {
    // Shortest representation that round-trips f64 (Rust's default Display).
    format!("{x}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Every key in a fixed order, defaults included; parsing this text
    /// reproduces the config exactly.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("experiment.name", self.experiment.clone());
        kv("run.operation", self.operation.to_string());
        kv("run.seed", self.seed.to_string());
        kv("run.replications", self.replications.to_string());
        kv("run.ladder", fmt_list(&self.ladder));
        kv("run.epsilon", fmt_f64(self.epsilon));
        kv("run.pairs", self.pairs.to_string());
        kv(
            "run.terms",
            match self.series.terms {
                None => "auto".to_string(),
                Some(t) => t.to_string(),
            },
        );
        kv(
            "run.calibration",
            self.series.calibration_replications.to_string(),
        );
        kv(
            "run.tail-compensation",
            self.series.tail_compensation.to_string(),
        );
        kv("kernel.family", self.kernel.family.to_string());
        kv("kernel.alpha", fmt_f64(self.kernel.alpha));
        kv("kernel.dimension", self.kernel.dimension.to_string());
        kv("kernel.base", self.kernel.base.to_string());
        kv(
            "kernel.support",
            format!(
                "{}, {}",
                fmt_f64(self.kernel.support.0),
                fmt_f64(self.kernel.support.1)
            ),
        );
        if !self.kernel.tabulated.is_empty() {
            kv("kernel.tabulated", fmt_list(&self.kernel.tabulated));
        }
        kv("kernel.cocycle", self.kernel.cocycle.to_string());
        kv("kernel.amplitude", fmt_f64(self.kernel.amplitude));
        kv("kernel.speed", fmt_f64(self.kernel.speed));
        if !self.kernel.factors.is_empty() {
            kv(
                "kernel.factors",
                self.kernel
                    .factors
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            );
        }
        kv("lattice.level", self.level.to_string());
        kv("lattice.window", fmt_f64(self.window));
        kv("quad.resolution", self.resolution.to_string());
        kv("quad.cell-budget", self.cell_budget.to_string());
        if let Some(p) = &self.output {
            kv("output.path", p.display().to_string());
        }
        s
    }

    /// FNV-1a over the canonical text; tags every result row.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("run.seed = 7\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.operation, Operation::Simulate);
        assert_eq!(c.kernel.family, FamilyKind::Translation);
        assert_eq!(c.kernel.alpha, 1.5);
        assert_eq!(c.level, 2);
        assert_eq!(c.ladder, vec![25.0, 50.0, 100.0, 200.0]);
        assert_eq!(c.window, 200.0);
        assert_eq!(c.replications, 100);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = parse_config(
            "# an experiment\n\nrun.seed = 3   # inline comment\nkernel.alpha = 0.8\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.kernel.alpha, 0.8);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let err = parse_config("kernel.alpha = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("run.seed is required"), "{err}");
    }

    #[test]
    fn decreasing_ladder_is_reported() {
        let err = parse_config("run.seed = 1\nrun.ladder = 100, 50\n").unwrap_err();
        assert!(err.to_string().contains("ladder not increasing"), "{err}");
    }

    #[test]
    fn alpha_two_cites_the_open_interval() {
        let err = parse_config("run.seed = 1\nkernel.alpha = 2.0\n").unwrap_err();
        assert!(
            err.to_string().contains("strictly between 0 and 2"),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_names_the_nearest() {
        let err = parse_config("run.seed = 1\nkernel.famly = translation\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key 'kernel.famly'"), "{msg}");
        assert!(msg.contains("kernel.family"), "{msg}");
    }

    #[test]
    fn all_violations_are_aggregated() {
        let err = parse_config(
            "run.seed = 1\nkernel.alpha = 2.5\nrun.ladder = 10, 5\nrun.epsilon = -1\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3 violation(s)"), "{msg}");
        assert!(msg.contains("strictly between"), "{msg}");
        assert!(msg.contains("not increasing"), "{msg}");
        assert!(msg.contains("epsilon"), "{msg}");
    }

    #[test]
    fn duplicate_keys_are_violations() {
        let err = parse_config("run.seed = 1\nrun.seed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"), "{err}");
    }

    #[test]
    fn overrides_replace_seed_and_operation() {
        let c = parse_with_overrides("kernel.alpha = 1.2\n", Some(9), Some(Operation::Maxima))
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.operation, Operation::Maxima);
        let c = parse_with_overrides("run.seed = 4\nrun.operation = classify\n", None, None)
            .unwrap();
        assert_eq!(c.operation, Operation::Classify);
    }

    #[test]
    fn canonical_round_trip_on_a_full_config() {
        let text = "\
experiment.name = product-run
run.operation = maxima
run.seed = 17
run.replications = 8
run.ladder = 2, 4, 8
run.epsilon = 0.25
run.pairs = 1500
run.terms = 300
run.calibration = 50000
kernel.family = product
kernel.alpha = 1.3
kernel.dimension = 2
kernel.factors = line, torus
lattice.level = 3
quad.resolution = 8
output.path = /tmp/rows.csv
";
        let c = parse_config(text).unwrap();
        let reparsed = parse_config(&c.canonical_text()).unwrap();
        assert_eq!(c, reparsed);
        assert_eq!(c.hash(), reparsed.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config("run.seed = 1\n").unwrap();
        let b = parse_config("run.seed = 2\n").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn window_beyond_ladder_is_allowed_but_short_window_is_not() {
        let c = parse_config("run.seed = 1\nlattice.window = 300\n").unwrap();
        assert_eq!(c.window, 300.0);
        let err = parse_config("run.seed = 1\nlattice.window = 100\n").unwrap_err();
        assert!(err.to_string().contains("beyond lattice.window"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_random_configs(
            seed in any::<u64>(),
            reps in 1usize..500,
            alpha in 0.3f64..1.9,
            level in 0u32..5,
            ladder_start in 1.0f64..10.0,
            rungs in 2usize..5,
            op in prop::sample::select(vec![
                Operation::Simulate,
                Operation::Classify,
                Operation::Maxima,
                Operation::LimitTest,
                Operation::ConditionCheck,
            ]),
        ) {
            let ladder: Vec<f64> =
                (0..rungs).map(|i| ladder_start * 2f64.powi(i as i32)).collect();
            let text = format!(
                "run.seed = {seed}\nrun.replications = {reps}\nkernel.alpha = {alpha}\n\
                 lattice.level = {level}\nrun.ladder = {}\nrun.operation = {op}\n",
                ladder.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "),
            );
            let c = parse_config(&text).unwrap();
            let reparsed = parse_config(&c.canonical_text()).unwrap();
            prop_assert_eq!(c, reparsed);
        }
    }
}
