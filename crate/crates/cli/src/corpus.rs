//! Bundled example configurations.

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Envelope,
    Reach,
    Solve,
    Compare,
}

struct Entry {
    name: &'static str,
    text: &'static str,
    commands: &'static [Command],
}

const ENTRIES: &[Entry] = &[
    Entry { name: "ex1", text: include_str!("../corpus/ex1.toml"), commands: &[Command::Envelope] },
    Entry { name: "ex2", text: include_str!("../corpus/ex2.toml"), commands: &[Command::Reach] },
    Entry { name: "ex3", text: include_str!("../corpus/ex3.toml"), commands: &[Command::Reach, Command::Compare] },
    Entry { name: "ex4", text: include_str!("../corpus/ex4.toml"), commands: &[Command::Compare] },
    Entry { name: "ex5", text: include_str!("../corpus/ex5.toml"), commands: &[Command::Compare] },
    Entry { name: "chatter", text: include_str!("../corpus/chatter.toml"), commands: &[Command::Compare] },
    Entry { name: "sum_inputs", text: include_str!("../corpus/sum_inputs.toml"), commands: &[Command::Reach] },
    Entry { name: "damped_plane", text: include_str!("../corpus/damped_plane.toml"), commands: &[Command::Reach] },
    Entry { name: "scaled_input", text: include_str!("../corpus/scaled_input.toml"), commands: &[Command::Reach] },
];

pub const NAMES: [&str; 9] = ["ex1", "ex2", "ex3", "ex4", "ex5", "chatter", "sum_inputs", "damped_plane", "scaled_input"];

fn entry(name: &str) -> Result<&'static Entry, CliError> {
    ENTRIES
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| CliError::Config(format!("unknown example `{name}`; available: {}", NAMES.join(", "))))
}

pub fn text(name: &str) -> Result<&'static str, CliError> {
    entry(name).map(|e| e.text)
}

pub fn load(name: &str) -> Result<RunConfig, CliError> {
    RunConfig::from_toml(entry(name)?.text)
}

/// Subcommands an example runs, in order.
pub fn commands(name: &str) -> Result<&'static [Command], CliError> {
    entry(name).map(|e| e.commands)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_entries() {
        assert_eq!(NAMES.len(), ENTRIES.len());
        for (n, e) in NAMES.iter().zip(ENTRIES) {
            assert_eq!(*n, e.name);
            assert_eq!(load(n).unwrap().name, *n);
        }
        assert!(matches!(load("ex9"), Err(CliError::Config(_))));
    }
}
