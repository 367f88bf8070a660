//! Instance files.
//!
//! Instances are TOML documents with a `kind` key:
//!
//! ```toml
//! kind = "lp"             # max c·μ over {μ ∈ Δ : lhs·μ = rhs}
//! cost = [0.2, 1.0, 0.5]
//! lhs = [[1.0, 1.0, 0.0]] # optional, one row per constraint
//! rhs = [0.5]             # optional
//! start = [0.25, 0.25, 0.5] # optional flow start, default max-entropy point
//! ```
//!
//! `kind = "pinned-atom"` takes `atoms`, `pinned` (default 0), `alpha` and
//! `cost`, and fixes `μ(pinned) = alpha`. `kind = "mdp"` takes `num_states`,
//! `num_actions`, `gamma`, `mu`, `transition` (one row of next-state
//! probabilities per pair `(s, a)`, state-major) and `reward[s][a]`.
//! `kind = "game"` takes `players`, `actions` and the flat joint `cost`
//! with player 1 as the most significant index.

use std::ops::Range;
use std::path::{Path, PathBuf};

use frflow_core::linalg::Matrix;
use frflow_core::lp_geometry::SimplexLp;
use frflow_core::mdp::Mdp;
use frflow_core::measures::Distribution;
use serde::Deserialize;
use toml::Spanned;

use crate::error::CliError;

/// Instances shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("kakade2x2", include_str!("../examples/kakade2x2.toml")),
    ("kakade2x2-variant", include_str!("../examples/kakade2x2-variant.toml")),
    ("ex35", include_str!("../examples/ex35.toml")),
    ("simplex3", include_str!("../examples/simplex3.toml")),
    ("game2x3", include_str!("../examples/game2x3.toml")),
];

#[derive(Debug, Deserialize)]
struct RawKind {
    kind: Spanned<String>,
}

enum RawInstance {
    Lp(RawLp),
    PinnedAtom(RawPinned),
    Mdp(RawMdp),
    Game(RawGame),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLp {
    #[serde(rename = "kind")]
    _kind: String,
    cost: Spanned<Vec<f64>>,
    #[serde(default)]
    lhs: Option<Spanned<Vec<Vec<f64>>>>,
    #[serde(default)]
    rhs: Option<Spanned<Vec<f64>>>,
    #[serde(default)]
    start: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPinned {
    #[serde(rename = "kind")]
    _kind: String,
    atoms: Spanned<usize>,
    #[serde(default)]
    pinned: usize,
    alpha: Spanned<f64>,
    cost: Spanned<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMdp {
    #[serde(rename = "kind")]
    _kind: String,
    num_states: usize,
    num_actions: usize,
    gamma: Spanned<f64>,
    mu: Spanned<Vec<f64>>,
    transition: Spanned<Vec<Vec<f64>>>,
    reward: Spanned<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    #[serde(rename = "kind")]
    _kind: String,
    players: usize,
    actions: usize,
    cost: Spanned<Vec<f64>>,
}

/// A multi-player payoff tensor as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub players: usize,
    pub actions: usize,
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Instance {
    Lp { lp: SimplexLp, start: Option<Distribution> },
    Mdp(Mdp),
    Game(GameSpec),
}

impl Instance {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lp { .. } => "lp",
            Self::Mdp(_) => "mdp",
            Self::Game(_) => "game",
        }
    }
}

/// Command-line values that replace fields of the instance file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
}

/// Where an instance came from, for messages and manifests.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Bundled(&'static str),
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::File(p) => write!(f, "{}", p.display()),
            Self::Bundled(name) => write!(f, "bundled:{name}"),
        }
    }
}

/// Looks `name` up on disk (with and without `.toml`) and then among the
/// bundled instances by file stem.
pub fn resolve(name: &str) -> Result<(Source, String), CliError> {
    let path = Path::new(name);
    for candidate in [path.to_path_buf(), path.with_extension("toml")] {
        if candidate.is_file() {
            let text = std::fs::read_to_string(&candidate).map_err(|source| CliError::Io {
                path: candidate.clone(),
                source,
            })?;
            return Ok((Source::File(candidate), text));
        }
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    match BUNDLED.iter().find(|(n, _)| *n == stem) {
        Some((n, text)) => Ok((Source::Bundled(n), (*text).to_owned())),
        None => Err(CliError::Precondition(format!(
            "no instance file `{name}` and no bundled instance named `{stem}`"
        ))),
    }
}

pub fn load(name: &str, overrides: Overrides) -> Result<(Source, Instance), CliError> {
    let (source, text) = resolve(name)?;
    let instance = parse(&text, overrides).map_err(|e| match e.span {
        Some(_) => e.locate(&source.to_string(), &text),
        None => CliError::Precondition(format!("{source}: {}", e.message)),
    })?;
    Ok((source, instance))
}

/// A parse failure with a byte range into the source text.
#[derive(Debug)]
pub struct ParseFailure {
    pub span: Option<Range<usize>>,
    pub message: String,
}

impl ParseFailure {
    fn at<T>(field: &Spanned<T>, message: impl Into<String>) -> Self {
        Self {
            span: Some(field.span()),
            message: message.into(),
        }
    }

    fn whole(message: impl Into<String>) -> Self {
        Self {
            span: None,
            message: message.into(),
        }
    }

    pub fn locate(self, origin: &str, text: &str) -> CliError {
        let (line, column) = match &self.span {
            Some(span) => line_column(text, span.start),
            None => (1, 1),
        };
        CliError::Parse {
            origin: origin.to_owned(),
            line,
            column,
            message: self.message,
        }
    }
}

/// One-based line and column (in characters) of byte offset `at`.
pub fn line_column(text: &str, at: usize) -> (usize, usize) {
    let at = at.min(text.len());
    let before = &text[..at];
    let line = before.matches('\n').count() + 1;
    let start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[start..].chars().count() + 1)
}

fn core_err<T>(field: &Spanned<T>) -> impl FnOnce(frflow_core::Error) -> ParseFailure + '_ {
    move |e| ParseFailure::at(field, e.to_string())
}

fn rows_to_matrix(rows: &Spanned<Vec<Vec<f64>>>, cols: usize) -> Result<Matrix, ParseFailure> {
    if let Some((i, r)) = rows.get_ref().iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(ParseFailure::at(
            rows,
            format!("row {} has {} entries, expected {cols}", i + 1, r.len()),
        ));
    }
    Ok(Matrix::from_rows(rows.get_ref(), cols))
}

fn distribution(field: &Spanned<Vec<f64>>) -> Result<Distribution, ParseFailure> {
    Distribution::new(field.get_ref().clone()).map_err(core_err(field))
}

pub fn parse(text: &str, overrides: Overrides) -> Result<Instance, ParseFailure> {
    fn de<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ParseFailure> {
        toml::from_str(text).map_err(|e| ParseFailure {
            span: e.span(),
            message: e.message().to_owned(),
        })
    }
    let kind = de::<RawKind>(text)?.kind;
    let raw = match kind.get_ref().as_str() {
        "lp" => RawInstance::Lp(de(text)?),
        "pinned-atom" => RawInstance::PinnedAtom(de(text)?),
        "mdp" => RawInstance::Mdp(de(text)?),
        "game" => RawInstance::Game(de(text)?),
        other => {
            return Err(ParseFailure::at(
                &kind,
                format!("unknown kind `{other}`, expected lp, pinned-atom, mdp or game"),
            ))
        }
    };
    if overrides.alpha.is_some() && !matches!(raw, RawInstance::PinnedAtom(_)) {
        return Err(ParseFailure::whole("--alpha applies to pinned-atom instances only"));
    }
    match raw {
        RawInstance::Lp(lp) => {
            let n = lp.cost.get_ref().len();
            let (lhs, rhs) = match (&lp.lhs, &lp.rhs) {
                (Some(lhs), Some(rhs)) => (rows_to_matrix(lhs, n)?, rhs.get_ref().clone()),
                (None, None) => (Matrix::zeros(0, n), Vec::new()),
                (Some(lhs), None) => return Err(ParseFailure::at(lhs, "`lhs` given without `rhs`")),
                (None, Some(rhs)) => return Err(ParseFailure::at(rhs, "`rhs` given without `lhs`")),
            };
            let program = SimplexLp::new(lhs, rhs, lp.cost.get_ref().clone()).map_err(|e| {
                let field = lp.lhs.as_ref().map_or(lp.cost.span(), |l| l.span());
                ParseFailure {
                    span: Some(field),
                    message: e.to_string(),
                }
            })?;
            let start = match &lp.start {
                Some(s) => {
                    let mu = distribution(s)?;
                    program.check_interior(&mu).map_err(core_err(s))?;
                    Some(mu)
                }
                None => None,
            };
            Ok(Instance::Lp { lp: program, start })
        }
        RawInstance::PinnedAtom(p) => {
            let n = *p.atoms.get_ref();
            let alpha = overrides.alpha.unwrap_or(*p.alpha.get_ref());
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(ParseFailure::at(&p.alpha, format!("alpha must lie in (0, 1), got {alpha}")));
            }
            if p.pinned >= n {
                return Err(ParseFailure::at(&p.atoms, format!("pinned atom {} out of range", p.pinned)));
            }
            if p.cost.get_ref().len() != n {
                return Err(ParseFailure::at(&p.cost, format!("expected {n} cost entries")));
            }
            let mut row = vec![0.0; n];
            row[p.pinned] = 1.0;
            let program =
                SimplexLp::new(Matrix::from_rows(&[row], n), vec![alpha], p.cost.get_ref().clone()).map_err(core_err(&p.cost))?;
            Ok(Instance::Lp {
                lp: program,
                start: None,
            })
        }
        RawInstance::Mdp(m) => {
            let (s_n, a_n) = (m.num_states, m.num_actions);
            if m.transition.get_ref().len() != s_n * a_n {
                return Err(ParseFailure::at(
                    &m.transition,
                    format!("expected {} rows, one per state-action pair", s_n * a_n),
                ));
            }
            let transition = rows_to_matrix(&m.transition, s_n)?.as_slice().to_vec();
            if m.reward.get_ref().len() != s_n {
                return Err(ParseFailure::at(&m.reward, format!("expected {s_n} rows, one per state")));
            }
            let reward = rows_to_matrix(&m.reward, a_n)?.as_slice().to_vec();
            let initial = distribution(&m.mu)?;
            let mdp = Mdp::new(s_n, a_n, transition, reward, *m.gamma.get_ref(), initial).map_err(core_err(&m.transition))?;
            Ok(Instance::Mdp(mdp))
        }
        RawInstance::Game(g) => {
            let size = (g.actions as u128).checked_pow(g.players as u32);
            if size != Some(g.cost.get_ref().len() as u128) {
                return Err(ParseFailure::at(
                    &g.cost,
                    format!("expected actions^players = {}^{} entries", g.actions, g.players),
                ));
            }
            Ok(Instance::Game(GameSpec {
                players: g.players,
                actions: g.actions,
                cost: g.cost.into_inner(),
            }))
        }
    }
}

/// Reads a log-linear feature matrix (`features = [[...], ...]`, one row per
/// state-action pair).
pub fn load_features(path: &Path, pairs: usize) -> Result<Matrix, CliError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawFeatures {
        features: Spanned<Vec<Vec<f64>>>,
    }
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let origin = path.display().to_string();
    let parsed = toml::from_str::<RawFeatures>(&text)
        .map_err(|e| ParseFailure {
            span: e.span(),
            message: e.message().to_owned(),
        })
        .and_then(|raw| {
            if raw.features.get_ref().len() != pairs {
                return Err(ParseFailure::at(&raw.features, format!("expected {pairs} rows")));
            }
            let cols = raw.features.get_ref().first().map_or(0, Vec::len);
            rows_to_matrix(&raw.features, cols)
        });
    parsed.map_err(|e| e.locate(&origin, &text))
}
