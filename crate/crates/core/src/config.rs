//! Ini-style component configuration and stack instantiation.
//!
//! ```ini
//! [setup]
//! bridge = numpy
//! debug = true
//!
//! [numpy]
//! type = bridge
//! children = node
//!
//! [node]
//! type = vem
//! impl = node
//! children = mcore
//!
//! [mcore]
//! type = ve
//! impl = mcore
//! ```
//!
//! `impl` names a built-in component. Shared-object style names such as
//! `libcphvb_ve_mcore.so` resolve by their last `_` segment. An engine section
//! may set `blocks` and `threads`; `VVM_BLOCKS` and `VVM_THREADS` override both.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::bridge::{BridgeError, Runtime};
use crate::engine::{EngineError, FusedEngine, SimpleEngine, VectorEngine};
use crate::vem::{Vem, VemError};

pub const CONFIG_ENV: &str = "VVM_CONFIG";
pub const BLOCKS_ENV: &str = "VVM_BLOCKS";
pub const THREADS_ENV: &str = "VVM_THREADS";
pub const DEFAULT_BLOCKS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing [setup] section")]
    MissingSetup,
    #[error("[setup] has no bridge entry")]
    MissingBridge,
    #[error("duplicate section [{0}]")]
    DuplicateSection(String),
    #[error("section [{section}] refers to missing component `{target}`")]
    Dangling { section: String, target: String },
    #[error("component chain loops back to [{0}]")]
    Cycle(String),
    #[error("section [{section}]: {message}")]
    Component { section: String, message: String },
    #[error("unknown implementation `{0}`")]
    UnknownImpl(String),
    #[error("invalid value `{value}` for {name}")]
    BadValue { name: String, value: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Vem(#[from] VemError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    Bridge,
    Vem,
    Ve,
}

impl FromStr for ComponentKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bridge" => Ok(ComponentKind::Bridge),
            "vem" => Ok(ComponentKind::Vem),
            "ve" => Ok(ComponentKind::Ve),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub name: String,
    pub kind: ComponentKind,
    pub implementation: Option<String>,
    pub children: Option<String>,
    /// Every key of the section, including ones not interpreted here.
    pub entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub bridge: String,
    pub debug: bool,
    pub components: Vec<ComponentSpec>,
}

/// The resolved bridge, manager and engine sections.
#[derive(Debug, Clone, Copy)]
pub struct Chain<'a> {
    pub bridge: &'a ComponentSpec,
    pub vem: &'a ComponentSpec,
    pub ve: &'a ComponentSpec,
}

fn parse_bool(name: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue { name: name.to_string(), value: value.to_string() }),
    }
}

/// Parses the configuration text and checks that components form one
/// bridge → vem → ve chain.
pub fn parse_ini(text: &str) -> Result<Config, ConfigError> {
    let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let syntax = |message: &str| ConfigError::Syntax { line: i + 1, message: message.to_string() };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?.trim();
            if name.is_empty() {
                return Err(syntax("empty section name"));
            }
            if sections.iter().any(|(n, _)| n == name) {
                return Err(ConfigError::DuplicateSection(name.to_string()));
            }
            sections.push((name.to_string(), BTreeMap::new()));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
        let (_, entries) = sections.last_mut().ok_or_else(|| syntax("entry outside any section"))?;
        entries.insert(key.trim().to_string(), value.trim().to_string());
    }

    let setup_pos = sections.iter().position(|(n, _)| n == "setup").ok_or(ConfigError::MissingSetup)?;
    let (_, setup) = sections.remove(setup_pos);
    let bridge = setup.get("bridge").cloned().ok_or(ConfigError::MissingBridge)?;
    let debug = setup.get("debug").map(|v| parse_bool("debug", v)).transpose()?.unwrap_or(false);

    let mut components = Vec::with_capacity(sections.len());
    for (name, entries) in sections {
        let kind_text = entries.get("type").ok_or_else(|| ConfigError::Component {
            section: name.clone(),
            message: "missing `type`".into(),
        })?;
        let kind = kind_text.parse().map_err(|_| ConfigError::Component {
            section: name.clone(),
            message: format!("unknown type `{kind_text}`"),
        })?;
        components.push(ComponentSpec {
            implementation: entries.get("impl").cloned(),
            children: entries.get("children").cloned(),
            name,
            kind,
            entries,
        });
    }
    for c in &components {
        if let Some(child) = &c.children {
            if !components.iter().any(|o| &o.name == child) {
                return Err(ConfigError::Dangling { section: c.name.clone(), target: child.clone() });
            }
        }
    }
    let config = Config { bridge, debug, components };
    config.chain()?;
    Ok(config)
}

impl Config {
    pub fn component(&self, name: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Follows `children` from the bridge named in [setup].
    pub fn chain(&self) -> Result<Chain<'_>, ConfigError> {
        let mut seen = HashSet::new();
        let mut links = Vec::new();
        let mut from = "setup".to_string();
        let mut next = Some(self.bridge.clone());
        while let Some(name) = next {
            if !seen.insert(name.clone()) {
                return Err(ConfigError::Cycle(name));
            }
            let spec = self.component(&name).ok_or_else(|| ConfigError::Dangling { section: from.clone(), target: name.clone() })?;
            links.push(spec);
            from = name;
            next = spec.children.clone();
        }
        let expected = [ComponentKind::Bridge, ComponentKind::Vem, ComponentKind::Ve];
        for (i, kind) in expected.iter().enumerate() {
            match links.get(i) {
                Some(spec) if spec.kind == *kind => {}
                Some(spec) => {
                    return Err(ConfigError::Component {
                        section: spec.name.clone(),
                        message: format!("expected a {kind:?} component at position {}", i + 1),
                    })
                }
                None => {
                    let last = links.last().map_or("setup".to_string(), |s| s.name.clone());
                    return Err(ConfigError::Component { section: last, message: format!("chain ends before a {kind:?} component") });
                }
            }
        }
        if let Some(extra) = links.get(3) {
            return Err(ConfigError::Component {
                section: links[2].name.clone(),
                message: format!("engines cannot have children (found `{}`)", extra.name),
            });
        }
        Ok(Chain { bridge: links[0], vem: links[1], ve: links[2] })
    }
}

impl Config {
    /// Resolves the engine at the end of the chain. `overrides` win over
    /// `blocks` and `threads` given in the engine section.
    pub fn engine_spec(&self, overrides: EngineOverrides) -> Result<EngineSpec, ConfigError> {
        let chain = self.chain()?;
        let vem_key = chain.vem.implementation.as_deref().map(registry_key).unwrap_or("node");
        if vem_key != "node" {
            return Err(ConfigError::UnknownImpl(vem_key.to_string()));
        }
        let ve_impl = chain.ve.implementation.as_deref().unwrap_or(&chain.ve.name);
        let kind: EngineKind = ve_impl.parse()?;
        let file = EngineOverrides {
            blocks: chain.ve.entries.get("blocks").map(|v| parse_count("blocks", v)).transpose()?,
            threads: chain.ve.entries.get("threads").map(|v| parse_count("threads", v)).transpose()?,
        };
        Ok(EngineSpec::resolve(kind, overrides.or(file)))
    }
}

/// Strips shared-object decoration: `libcphvb_ve_mcore.so` → `mcore`.
pub fn registry_key(implementation: &str) -> &str {
    let trimmed = implementation.trim();
    let file = trimmed.rsplit('/').next().unwrap_or(trimmed);
    match file.strip_suffix(".so") {
        Some(stem) => stem.rsplit('_').next().unwrap_or(stem),
        None => file,
    }
}

/// Built-in engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Simple,
    Score,
    Mcore,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Simple, EngineKind::Score, EngineKind::Mcore];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Simple => "simple",
            EngineKind::Score => "score",
            EngineKind::Mcore => "mcore",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match registry_key(s) {
            "simple" => Ok(EngineKind::Simple),
            "score" => Ok(EngineKind::Score),
            "mcore" => Ok(EngineKind::Mcore),
            other => Err(ConfigError::UnknownImpl(other.to_string())),
        }
    }
}

/// Block and thread counts given outside the configuration file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOverrides {
    pub blocks: Option<usize>,
    pub threads: Option<usize>,
}

fn parse_count(name: &str, value: &str) -> Result<usize, ConfigError> {
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(ConfigError::BadValue { name: name.to_string(), value: value.to_string() }),
    }
}

impl EngineOverrides {
    /// Reads overrides through `lookup`, which maps variable names to values.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<EngineOverrides, ConfigError> {
        Ok(EngineOverrides {
            blocks: lookup(BLOCKS_ENV).map(|v| parse_count(BLOCKS_ENV, &v)).transpose()?,
            threads: lookup(THREADS_ENV).map(|v| parse_count(THREADS_ENV, &v)).transpose()?,
        })
    }

    pub fn from_env() -> Result<EngineOverrides, ConfigError> {
        EngineOverrides::from_lookup(|name| std::env::var(name).ok())
    }

    /// Values set here win over `other`.
    pub fn or(self, other: EngineOverrides) -> EngineOverrides {
        EngineOverrides { blocks: self.blocks.or(other.blocks), threads: self.threads.or(other.threads) }
    }
}

pub fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// A fully resolved engine choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineSpec {
    pub kind: EngineKind,
    pub blocks: usize,
    pub threads: usize,
}

impl EngineSpec {
    /// Fills in defaults: 16 blocks, one thread for `score`, every available
    /// core for `mcore`. `simple` neither blocks nor threads.
    pub fn resolve(kind: EngineKind, overrides: EngineOverrides) -> EngineSpec {
        match kind {
            EngineKind::Simple => EngineSpec { kind, blocks: 1, threads: 1 },
            EngineKind::Score => {
                EngineSpec { kind, blocks: overrides.blocks.unwrap_or(DEFAULT_BLOCKS), threads: 1 }
            }
            EngineKind::Mcore => EngineSpec {
                kind,
                blocks: overrides.blocks.unwrap_or(DEFAULT_BLOCKS),
                threads: overrides.threads.unwrap_or_else(available_threads),
            },
        }
    }

    pub fn build(&self) -> Result<Box<dyn VectorEngine>, ConfigError> {
        Ok(match self.kind {
            EngineKind::Simple => Box::new(SimpleEngine::new()),
            EngineKind::Score => Box::new(FusedEngine::score(self.blocks)),
            EngineKind::Mcore => Box::new(FusedEngine::mcore(self.blocks, self.threads)?),
        })
    }
}

/// An instantiated bridge → manager → engine stack.
#[derive(Debug)]
pub struct ComponentStack {
    pub runtime: Runtime,
    pub engine: EngineSpec,
    /// Section names, bridge first.
    pub names: [String; 3],
}

/// Builds the stack described by `config`. The engine is initialized first,
/// then the manager, then the bridge.
pub fn instantiate(config: &Config, env: EngineOverrides) -> Result<ComponentStack, ConfigError> {
    let chain = config.chain()?;
    let engine = config.engine_spec(env)?;
    let vem = Vem::new(engine.build()?)?;
    let runtime = Runtime::new(vem)?;
    runtime.set_debug(config.debug);
    Ok(ComponentStack {
        runtime,
        engine,
        names: [chain.bridge.name.clone(), chain.vem.name.clone(), chain.ve.name.clone()],
    })
}

pub fn load(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_ini(&text)
}

/// Loads the file named by `VVM_CONFIG`, if set.
pub fn load_from_env() -> Result<Option<Config>, ConfigError> {
    std::env::var_os(CONFIG_ENV).map(|p| load(Path::new(&p))).transpose()
}
