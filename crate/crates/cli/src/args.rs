use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mapcheck_core::ast::Nat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
}

#[derive(Args, Debug)]
pub struct Inputs {
    /// Kernel source files; several files are analyzed concurrently.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
    /// Accept only the unsynchronized fragment and make uninitialized reads errors.
    #[arg(long)]
    pub strict_paper: bool,
}

#[derive(Args, Debug, Default)]
pub struct EnvArgs {
    /// Concrete parameter value.
    #[arg(long = "set", value_name = "NAME=NAT", value_parser = parse_assignment)]
    pub set: Vec<(String, Nat)>,
    /// Inclusive parameter range, used by `smt`.
    #[arg(long = "bound", value_name = "NAME=LO..HI", value_parser = parse_bound)]
    pub bound: Vec<(String, Nat, Nat)>,
    /// Declares a parameter without giving it a value.
    #[arg(long = "param", value_name = "NAME", value_parser = parse_ident)]
    pub param: Vec<String>,
}

impl EnvArgs {
    /// Every parameter name mentioned on the command line.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.param.clone();
        names.extend(self.set.iter().map(|(n, _)| n.clone()));
        names.extend(self.bound.iter().map(|(n, _, _)| n.clone()));
        names.sort();
        names.dedup();
        names
    }
}

#[derive(Args, Debug)]
pub struct ThreadArgs {
    /// Thread set {0, …, N-1}.
    #[arg(long, value_name = "N", default_value_t = 2, conflicts_with = "tids")]
    pub threads: Nat,
    /// Explicit thread identifiers.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub tids: Option<Vec<Nat>>,
}

impl ThreadArgs {
    pub fn thread_ids(&self) -> Vec<Nat> {
        match &self.tids {
            Some(t) => t.clone(),
            None => (0..self.threads).collect(),
        }
    }
}

#[derive(Args, Debug)]
pub struct ExecArgs {
    #[command(flatten)]
    pub threads: ThreadArgs,
    /// Value returned by reads of never-written cells (the default is 0).
    #[arg(long, value_name = "NAT", conflicts_with_all = ["strict_uninit", "strict_paper"])]
    pub uninit_default: Option<Nat>,
    /// Make reads of never-written cells an error.
    #[arg(long)]
    pub strict_uninit: bool,
    /// Maximum loop iterations per thread.
    #[arg(long, value_name = "N")]
    pub fuel: Option<Nat>,
    /// Initial array contents.
    #[arg(long = "init", value_name = "INDEX=NAT", value_parser = parse_cell)]
    pub init: Vec<(Nat, Nat)>,
}

fn parse_nat(s: &str) -> Result<Nat, String> {
    s.trim().parse().map_err(|_| format!("`{s}` is not a natural number"))
}

fn parse_ident(s: &str) -> Result<String, String> {
    let mut chars = s.chars();
    let valid = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !valid {
        return Err(format!("`{s}` is not an identifier"));
    }
    if s == "tid" || s == "A" {
        return Err(format!("`{s}` is reserved"));
    }
    Ok(s.to_string())
}

fn parse_assignment(s: &str) -> Result<(String, Nat), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=NAT, got `{s}`"))?;
    Ok((parse_ident(name.trim())?, parse_nat(value)?))
}

fn parse_bound(s: &str) -> Result<(String, Nat, Nat), String> {
    let (name, range) = s.split_once('=').ok_or_else(|| format!("expected NAME=LO..HI, got `{s}`"))?;
    let (lo, hi) = range.split_once("..").ok_or_else(|| format!("expected LO..HI, got `{range}`"))?;
    let (lo, hi) = (parse_nat(lo)?, parse_nat(hi)?);
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((parse_ident(name.trim())?, lo, hi))
}

fn parse_cell(s: &str) -> Result<(Nat, Nat), String> {
    let (index, value) = s.split_once('=').ok_or_else(|| format!("expected INDEX=NAT, got `{s}`"))?;
    Ok((parse_nat(index)?, parse_nat(value)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert_eq!(parse_assignment("M=3"), Ok(("M".into(), 3)));
        assert!(parse_assignment("M").is_err());
        assert!(parse_assignment("tid=1").is_err());
        assert!(parse_assignment("1x=1").is_err());
        assert_eq!(parse_bound("M=1..8"), Ok(("M".into(), 1, 8)));
        assert!(parse_bound("M=8..1").is_err());
        assert!(parse_bound("M=1-8").is_err());
        assert_eq!(parse_cell("4=7"), Ok((4, 7)));
        assert!(parse_cell("x=7").is_err());
    }

    #[test]
    fn names_are_merged() {
        let env = EnvArgs {
            set: vec![("M".into(), 1)],
            bound: vec![("N".into(), 0, 2), ("M".into(), 0, 1)],
            param: vec!["K".into()],
        };
        assert_eq!(env.names(), ["K", "M", "N"]);
    }
}
