use std::fs;
use std::path::Path;

use super::{AugmentError, Result, Strategy};

const EE_TEMPLATE: &str = include_str!("../../assets/prompts/ee.txt");
const CE_TEMPLATE: &str = include_str!("../../assets/prompts/ce.txt");

const TEXT_SLOT: &str = "{TEXT}";
const K_SLOT: &str = "{K}";

/// A system message plus a user template with `{TEXT}` and `{K}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub strategy: Strategy,
    pub system_text: String,
    pub user_template: String,
}

/// A rendered chat prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn new(strategy: Strategy, system_text: &str, user_template: &str) -> Result<Self> {
        for slot in [TEXT_SLOT, K_SLOT] {
            let n = user_template.matches(slot).count();
            if n != 1 {
                return Err(AugmentError::Template(format!(
                    "{slot} must appear exactly once in the user template, found {n}"
                )));
            }
        }
        Ok(Self {
            strategy,
            system_text: system_text.trim().to_owned(),
            user_template: user_template.trim().to_owned(),
        })
    }

    /// Parses a template asset: system text, a line containing only `---`,
    /// then the user template.
    pub fn parse(strategy: Strategy, src: &str) -> Result<Self> {
        let mut system = String::new();
        let mut user = String::new();
        let mut in_user = false;
        for line in src.lines() {
            if !in_user && line.trim() == "---" {
                in_user = true;
                continue;
            }
            let buf = if in_user { &mut user } else { &mut system };
            buf.push_str(line);
            buf.push('\n');
        }
        if !in_user {
            return Err(AugmentError::Template("missing --- separator".into()));
        }
        Self::new(strategy, &system, &user)
    }

    pub fn load(strategy: Strategy, path: &Path) -> Result<Self> {
        Self::parse(strategy, &fs::read_to_string(path)?)
    }

    /// The template shipped with the crate.
    pub fn builtin(strategy: Strategy) -> Self {
        let src = match strategy {
            Strategy::Ee => EE_TEMPLATE,
            Strategy::Ce => CE_TEMPLATE,
        };
        Self::parse(strategy, src).expect("builtin template is valid")
    }

    pub fn render(&self, text: &str, k: usize) -> Prompt {
        // Substitute K first so a literal "{K}" inside the text survives.
        let user = self
            .user_template
            .replacen(K_SLOT, &k.to_string(), 1)
            .replacen(TEXT_SLOT, text.trim(), 1);
        Prompt {
            system: self.system_text.clone(),
            user,
        }
    }
}

/// Renders the builtin template for `strategy`.
pub fn build_prompt(strategy: Strategy, text: &str, k: usize) -> Prompt {
    PromptTemplate::builtin(strategy).render(text, k)
}
