//! Strict experiment configuration.
//!
//! The format is a flat INI dialect: `[section]` headers, `key = value`
//! lines, `#` comments. Values are scalars, bare words, bracketed lists
//! `[a, b, c]`, or Jordan block lists `[real(lambda, size),
//! complex(alpha, beta, size)]`. Every section and key is checked against
//! the schema before any computation runs; unknown names abort with exit
//! code 2. Command-line flags override the `[run]` section, and the
//! effective configuration is echoed into the output directory for audit.

use crate::{CliError, CliResult};
use nlplab_core::kernel::{JordanBlockSpec, KernelSpec, LinearMapSpec, PsiProfile, PsiShape};
use nlplab_core::linalg::Matrix;
use std::collections::BTreeMap;
use std::path::PathBuf;

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["seed", "threads", "out"]),
    (
        "kernel",
        &[
            "psi.shape",
            "psi.amplitude",
            "psi.dimension",
            "map.matrix",
            "map.blocks",
            "map.conjugation",
        ],
    ),
    (
        "spectral",
        &["p", "radii", "h", "restarts", "max_iters", "tol"],
    ),
    ("minimizers", &["p", "n_list", "samples"]),
    (
        "evolve",
        &[
            "p",
            "r",
            "half_width",
            "h",
            "t_final",
            "dt",
            "scheme",
            "safety",
            "boundary",
            "boundary_mass_threshold",
            "record_every",
            "snapshot_every",
            "u0.kind",
            "u0.radius",
            "u0.amplitude",
            "fit.regime",
            "fit.window",
        ],
    ),
    ("pinf", &["p_list", "epsilons", "h", "q_mode"]),
];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                if sections.contains_key(&name) {
                    return Err(cfg_err(format!(
                        "line {}: duplicate section [{name}]",
                        lineno + 1
                    )));
                }
                sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(cfg_err(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let section = current.as_ref().ok_or_else(|| {
                cfg_err(format!("line {}: key outside any [section]", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let map = sections.get_mut(section).expect("section exists");
            if map.insert(key.clone(), value).is_some() {
                return Err(cfg_err(format!(
                    "line {}: duplicate key `{key}` in [{section}]",
                    lineno + 1
                )));
            }
        }
        let cfg = ExperimentConfig { sections };
        cfg.validate_schema()?;
        Ok(cfg)
    }

    fn validate_schema(&self) -> CliResult<()> {
        for (name, keys) in &self.sections {
            let Some((_, allowed)) = SCHEMA.iter().find(|(s, _)| s == name) else {
                return Err(cfg_err(format!("unknown section [{name}]")));
            };
            for key in keys.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(cfg_err(format!("unknown key `{key}` in [{name}]")));
                }
            }
        }
        Ok(())
    }

    pub fn apply_overrides(
        &mut self,
        out: Option<String>,
        seed: Option<u64>,
        threads: Option<usize>,
    ) {
        let run = self.sections.entry("run".into()).or_default();
        if let Some(o) = out {
            run.insert("out".into(), o);
        }
        if let Some(s) = seed {
            run.insert("seed".into(), s.to_string());
        }
        if let Some(t) = threads {
            run.insert("threads".into(), t.to_string());
        }
    }

    /// Canonical text of the effective configuration (sorted sections and
    /// keys), written to the output directory for reproducibility audits.
    pub fn echo_text(&self) -> String {
        let mut out = String::new();
        for (name, keys) in &self.sections {
            if keys.is_empty() {
                continue;
            }
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }

    pub fn out_dir(&self) -> PathBuf {
        self.get("run", "out")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn seed(&self) -> CliResult<Option<u64>> {
        match self.get("run", "seed") {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(format!("[run] seed must be an unsigned integer, got {v}"))),
        }
    }

    /// A seed is mandatory for every operation that draws randomness.
    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed()?.ok_or_else(|| {
            cfg_err("this command draws random numbers: set `seed` in [run] or pass --seed")
        })
    }

    pub fn threads(&self) -> CliResult<usize> {
        match self.get("run", "threads") {
            None => Ok(std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)),
            Some(v) => {
                let n: usize = v.parse().map_err(|_| {
                    cfg_err(format!("[run] threads must be a positive integer, got {v}"))
                })?;
                if n == 0 {
                    return Err(cfg_err("[run] threads must be positive"));
                }
                Ok(n)
            }
        }
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|m| m.get(key))
            .map(|s| s.as_str())
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn has_key(&self, section: &str, key: &str) -> bool {
        self.get(section, key).is_some()
    }

    fn require(&self, section: &str, key: &str) -> CliResult<&str> {
        if !self.sections.contains_key(section) {
            return Err(cfg_err(format!("missing section [{section}]")));
        }
        self.get(section, key)
            .ok_or_else(|| cfg_err(format!("missing key `{key}` in [{section}]")))
    }

    pub fn f64_req(&self, section: &str, key: &str) -> CliResult<f64> {
        parse_f64(self.require(section, key)?, section, key)
    }

    pub fn f64_opt(&self, section: &str, key: &str, default: f64) -> CliResult<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => parse_f64(v, section, key),
        }
    }

    pub fn usize_opt(&self, section: &str, key: &str, default: usize) -> CliResult<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                cfg_err(format!(
                    "[{section}] {key} must be an unsigned integer, got {v}"
                ))
            }),
        }
    }

    pub fn u64_opt(&self, section: &str, key: &str, default: u64) -> CliResult<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                cfg_err(format!(
                    "[{section}] {key} must be an unsigned integer, got {v}"
                ))
            }),
        }
    }

    pub fn word_opt(&self, section: &str, key: &str, default: &str) -> CliResult<String> {
        Ok(self.get(section, key).unwrap_or(default).to_string())
    }

    pub fn list_f64_req(&self, section: &str, key: &str) -> CliResult<Vec<f64>> {
        parse_list(self.require(section, key)?, section, key)?
            .iter()
            .map(|item| parse_f64(item, section, key))
            .collect()
    }

    pub fn list_u32_req(&self, section: &str, key: &str) -> CliResult<Vec<u32>> {
        parse_list(self.require(section, key)?, section, key)?
            .iter()
            .map(|item| {
                item.parse().map_err(|_| {
                    cfg_err(format!(
                        "[{section}] {key}: expected unsigned integer, got `{item}`"
                    ))
                })
            })
            .collect()
    }

    /// `dt = auto` or a positive number.
    pub fn dt_opt(&self, section: &str, key: &str) -> CliResult<Option<f64>> {
        match self.get(section, key) {
            None | Some("auto") => Ok(None),
            Some(v) => Ok(Some(parse_f64(v, section, key)?)),
        }
    }

    /// `fit.window = auto` or `[t0, t1]`.
    pub fn window_opt(&self, section: &str, key: &str) -> CliResult<Option<(f64, f64)>> {
        match self.get(section, key) {
            None | Some("auto") => Ok(None),
            Some(v) => {
                let items = parse_list(v, section, key)?;
                if items.len() != 2 {
                    return Err(cfg_err(format!(
                        "[{section}] {key} must be `auto` or `[t0, t1]`"
                    )));
                }
                Ok(Some((
                    parse_f64(&items[0], section, key)?,
                    parse_f64(&items[1], section, key)?,
                )))
            }
        }
    }

    /// Builds the kernel from `[kernel]`; construction failures (singular
    /// matrix, inconsistent blocks, degenerate profile) are configuration
    /// errors.
    pub fn kernel(&self) -> CliResult<KernelSpec> {
        let shape = match self.require("kernel", "psi.shape")? {
            "box" => PsiShape::Box,
            "cone" => PsiShape::Cone,
            "smooth-bump" => PsiShape::SmoothBump,
            other => {
                return Err(cfg_err(format!(
                    "[kernel] psi.shape must be box | cone | smooth-bump, got {other}"
                )))
            }
        };
        let amplitude = self.f64_req("kernel", "psi.amplitude")?;
        let dim = self.usize_opt("kernel", "psi.dimension", 0)?;
        if dim == 0 {
            return Err(cfg_err("missing or zero `psi.dimension` in [kernel]"));
        }
        let psi = PsiProfile::new(shape, amplitude, dim).map_err(|e| cfg_err(e.to_string()))?;

        let entries = self.list_f64_req("kernel", "map.matrix")?;
        if entries.len() != dim * dim {
            return Err(cfg_err(format!(
                "[kernel] map.matrix has {} entries; psi.dimension = {dim} needs {}",
                entries.len(),
                dim * dim
            )));
        }
        let matrix = Matrix::from_rows(dim, entries).map_err(|e| cfg_err(e.to_string()))?;
        let map = match self.get("kernel", "map.blocks") {
            None => {
                if self.get("kernel", "map.conjugation").is_some() {
                    return Err(cfg_err("[kernel] map.conjugation given without map.blocks"));
                }
                LinearMapSpec::new(matrix).map_err(|e| cfg_err(e.to_string()))?
            }
            Some(blocks_text) => {
                let blocks = parse_blocks(blocks_text)?;
                let conj_entries = self.list_f64_req("kernel", "map.conjugation")?;
                if conj_entries.len() != dim * dim {
                    return Err(cfg_err(format!(
                        "[kernel] map.conjugation has {} entries; needs {}",
                        conj_entries.len(),
                        dim * dim
                    )));
                }
                let conj =
                    Matrix::from_rows(dim, conj_entries).map_err(|e| cfg_err(e.to_string()))?;
                LinearMapSpec::with_blocks(matrix, blocks, conj)
                    .map_err(|e| cfg_err(e.to_string()))?
            }
        };
        KernelSpec::new(psi, map).map_err(|e| cfg_err(e.to_string()))
    }

    /// Serializes a kernel back into `[kernel]` section text (the inverse
    /// of [`ExperimentConfig::kernel`], used by the config echo tests).
    pub fn kernel_section_text(spec: &KernelSpec) -> String {
        let mut out = String::from("[kernel]\n");
        out.push_str(&format!("psi.shape = {}\n", spec.psi.shape().name()));
        out.push_str(&format!(
            "psi.amplitude = {}\n",
            crate::formats::f17(spec.psi.amplitude())
        ));
        out.push_str(&format!("psi.dimension = {}\n", spec.psi.dim()));
        let rows: Vec<String> = spec
            .map
            .matrix()
            .rows()
            .iter()
            .map(|v| crate::formats::f17(*v))
            .collect();
        out.push_str(&format!("map.matrix = [{}]\n", rows.join(", ")));
        if let Some(structure) = spec.map.blocks() {
            let blocks: Vec<String> = structure
                .blocks
                .iter()
                .map(|b| match b.kind() {
                    nlplab_core::kernel::BlockKind::Real { lambda, size } => {
                        format!("real({}, {size})", crate::formats::f17(lambda))
                    }
                    nlplab_core::kernel::BlockKind::Complex { alpha, beta, size } => format!(
                        "complex({}, {}, {size})",
                        crate::formats::f17(alpha),
                        crate::formats::f17(beta)
                    ),
                })
                .collect();
            out.push_str(&format!("map.blocks = [{}]\n", blocks.join(", ")));
            let conj: Vec<String> = structure
                .conjugation
                .rows()
                .iter()
                .map(|v| crate::formats::f17(*v))
                .collect();
            out.push_str(&format!("map.conjugation = [{}]\n", conj.join(", ")));
        }
        out
    }
}

fn parse_f64(v: &str, section: &str, key: &str) -> CliResult<f64> {
    v.parse()
        .map_err(|_| cfg_err(format!("[{section}] {key}: expected a number, got `{v}`")))
}

/// Splits `[a, b, c]` into item strings, respecting parentheses so block
/// entries like `real(2.0, 1)` stay whole.
fn parse_list(v: &str, section: &str, key: &str) -> CliResult<Vec<String>> {
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| cfg_err(format!("[{section}] {key}: expected `[ ... ]`, got `{v}`")))?;
    let mut items = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in inner.chars() {
        match c {
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| cfg_err(format!("[{section}] {key}: unbalanced parentheses")))?;
                cur.push(c);
            }
            ',' if depth == 0 => {
                items.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        items.push(cur.trim().to_string());
    }
    if items.is_empty() {
        return Err(cfg_err(format!("[{section}] {key}: list is empty")));
    }
    Ok(items)
}

fn parse_blocks(text: &str) -> CliResult<Vec<JordanBlockSpec>> {
    let items = parse_list(text, "kernel", "map.blocks")?;
    items
        .iter()
        .map(|item| {
            if let Some(args) = item.strip_prefix("real(").and_then(|s| s.strip_suffix(')')) {
                let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(cfg_err(format!("block `{item}` needs real(lambda, size)")));
                }
                let lambda = parse_f64(parts[0], "kernel", "map.blocks")?;
                let size: usize = parts[1]
                    .parse()
                    .map_err(|_| cfg_err(format!("block `{item}`: bad size `{}`", parts[1])))?;
                JordanBlockSpec::real(lambda, size).map_err(|e| cfg_err(e.to_string()))
            } else if let Some(args) = item
                .strip_prefix("complex(")
                .and_then(|s| s.strip_suffix(')'))
            {
                let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(cfg_err(format!(
                        "block `{item}` needs complex(alpha, beta, size)"
                    )));
                }
                let alpha = parse_f64(parts[0], "kernel", "map.blocks")?;
                let beta = parse_f64(parts[1], "kernel", "map.blocks")?;
                let size: usize = parts[2]
                    .parse()
                    .map_err(|_| cfg_err(format!("block `{item}`: bad size `{}`", parts[2])))?;
                JordanBlockSpec::complex(alpha, beta, size).map_err(|e| cfg_err(e.to_string()))
            } else {
                Err(cfg_err(format!(
                    "block `{item}` must be real(lambda, size) or complex(alpha, beta, size)"
                )))
            }
        })
        .collect()
}
