use std::fmt::Write;

use super::{Action, Condition, Program, Rule};
use crate::grid::{Dictionary, SpriteId};

/// Canonical text, one rule per line. Ids whose name would not parse back to
/// the same id are written as bare integers.
pub fn print_program(program: &Program, dict: &Dictionary) -> String {
    let mut out = String::new();
    for rule in &program.rules {
        out.push_str(&print_rule(rule, dict));
        out.push('\n');
    }
    out
}

pub fn print_rule(rule: &Rule, dict: &Dictionary) -> String {
    let mut s = String::from("IF (");
    match rule.condition {
        Condition::ExistsInMap(e) => write!(s, "exists_in_map({})", entity(e, dict)),
        Condition::Neighboring(e) => write!(s, "neighboring({})", entity(e, dict)),
        Condition::Neighbours(a, b) => {
            write!(s, "neighbours({}, {})", entity(a, dict), entity(b, dict))
        }
        Condition::ExistsInPosition(p) => write!(s, "exists_in_position({}, {})", p.col, p.row),
    }
    .unwrap();
    s.push_str(") THEN ");
    match rule.action {
        Action::FollowEntity(e) => write!(s, "follow_entity({})", entity(e, dict)),
        Action::FollowDirection(d) => write!(s, "follow_direction({d})"),
        Action::ChangeToEntity(e) => write!(s, "change_to_entity({})", entity(e, dict)),
        Action::FollowTargetLocation(p) => {
            write!(s, "follow_target_location({}, {})", p.col, p.row)
        }
    }
    .unwrap();
    s
}

fn entity(id: SpriteId, dict: &Dictionary) -> String {
    match dict.name(id) {
        Some(name) if is_identifier(name) && dict.lookup(name) == Some(id) => name.to_string(),
        _ => id.0.to_string(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
