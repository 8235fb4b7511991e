//! Recursive-descent parser for program text.
//!
//! Keywords and function names are case-insensitive, and a function name may
//! be spelled with spaces instead of underscores (`exists in map(X)`), so the
//! rendered form shown to people parses as well as the canonical one. `#`
//! starts a comment that runs to the end of the line.

use std::fmt;

use super::{Action, Condition, Direction, Program, Rule};
use crate::grid::{Dictionary, Position, SpriteId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    Expected { expected: String, found: String },
    UnknownCondition(String),
    UnknownAction(String),
    UnknownSprite(String),
    UnknownDirection(String),
    IdOutOfRange(u64),
    PositionOutOfRange { col: u64, row: u64 },
    IntegerTooLarge,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::Expected { expected, found } => {
                write!(f, "expected {expected}, found {found}")
            }
            ParseErrorKind::UnknownCondition(n) => write!(f, "unknown condition `{n}`"),
            ParseErrorKind::UnknownAction(n) => write!(f, "unknown action `{n}`"),
            ParseErrorKind::UnknownSprite(n) => write!(f, "unknown sprite `{n}`"),
            ParseErrorKind::UnknownDirection(n) => {
                write!(f, "unknown direction `{n}` (expected UP, DOWN, LEFT or RIGHT)")
            }
            ParseErrorKind::IdOutOfRange(id) => write!(f, "sprite id {id} is out of range"),
            ParseErrorKind::PositionOutOfRange { col, row } => {
                write!(f, "position ({col},{row}) is outside the grid")
            }
            ParseErrorKind::IntegerTooLarge => f.write_str("integer literal is too large"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    LParen,
    RParen,
    Comma,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);

    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        let tok = match c {
            c if c.is_whitespace() => {
                bump(&mut chars);
                continue;
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    bump(&mut chars);
                }
                continue;
            }
            '(' => {
                bump(&mut chars);
                Tok::LParen
            }
            ')' => {
                bump(&mut chars);
                Tok::RParen
            }
            ',' => {
                bump(&mut chars);
                Tok::Comma
            }
            c if c.is_ascii_digit() => {
                let mut value: u64 = 0;
                let mut overflow = false;
                while let Some(&d) = chars.peek() {
                    let Some(digit) = d.to_digit(10) else { break };
                    bump(&mut chars);
                    match value.checked_mul(10).and_then(|v| v.checked_add(digit as u64)) {
                        Some(v) => value = v,
                        None => overflow = true,
                    }
                }
                if overflow {
                    return Err(ParseError {
                        line: start_line,
                        col: start_col,
                        kind: ParseErrorKind::IntegerTooLarge,
                    });
                }
                Tok::Int(value)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while chars
                    .peek()
                    .is_some_and(|&c| c.is_ascii_alphanumeric() || c == '_')
                {
                    s.push(bump(&mut chars));
                }
                Tok::Ident(s)
            }
            other => {
                return Err(ParseError {
                    line: start_line,
                    col: start_col,
                    kind: ParseErrorKind::UnexpectedChar(other),
                })
            }
        };
        out.push(Token {
            tok,
            line: start_line,
            col: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    dict: &'a Dictionary,
}

/// Parses program text against a sprite dictionary and grid bounds.
pub fn parse_program(text: &str, dict: &Dictionary) -> Result<Program, ParseError> {
    let mut p = Parser {
        tokens: lex(text)?,
        pos: 0,
        dict,
    };
    let mut rules = Vec::new();
    while p.peek().tok != Tok::Eof {
        rules.push(p.rule()?);
    }
    Ok(Program::new(rules))
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn err_at(t: &Token, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: t.line,
            col: t.col,
            kind,
        }
    }

    fn expected(t: &Token, what: &str) -> ParseError {
        Self::err_at(
            t,
            ParseErrorKind::Expected {
                expected: what.to_string(),
                found: t.tok.to_string(),
            },
        )
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        let t = self.next();
        if t.tok == tok {
            Ok(())
        } else {
            Err(Self::expected(&t, &tok.to_string()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s.eq_ignore_ascii_case(kw) => Ok(()),
            _ => Err(Self::expected(&t, &format!("`{kw}`"))),
        }
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        self.keyword("IF")?;
        self.expect(Tok::LParen)?;
        let condition = self.condition()?;
        self.expect(Tok::RParen)?;
        self.keyword("THEN")?;
        let action = self.action()?;
        Ok(Rule::new(condition, action))
    }

    /// Reads one or more words up to the opening parenthesis and returns the
    /// underscore-joined, lowercased name along with its first token.
    fn function_name(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        let first = self.next();
        let Tok::Ident(word) = &first.tok else {
            return Err(Self::expected(&first, what));
        };
        let mut name = word.to_ascii_lowercase();
        while let Tok::Ident(word) = &self.peek().tok {
            name.push('_');
            name.push_str(&word.to_ascii_lowercase());
            self.pos += 1;
        }
        self.expect(Tok::LParen)?;
        Ok((name, first))
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        let (name, at) = self.function_name("a condition")?;
        let cond = match name.as_str() {
            "exists_in_map" => Condition::ExistsInMap(self.entity()?),
            "neighboring" | "is_neighboring" => Condition::Neighboring(self.entity()?),
            "neighbours" | "neighboring_entities" => {
                let a = self.entity()?;
                self.expect(Tok::Comma)?;
                Condition::Neighbours(a, self.entity()?)
            }
            "exists_in_position" => Condition::ExistsInPosition(self.position()?),
            _ => return Err(Self::err_at(&at, ParseErrorKind::UnknownCondition(name))),
        };
        self.expect(Tok::RParen)?;
        Ok(cond)
    }

    fn action(&mut self) -> Result<Action, ParseError> {
        let (name, at) = self.function_name("an action")?;
        let action = match name.as_str() {
            "follow_entity" => Action::FollowEntity(self.entity()?),
            "follow_direction" => Action::FollowDirection(self.direction()?),
            "change_to_entity" => Action::ChangeToEntity(self.entity()?),
            "follow_target_location" | "follow_target" => {
                Action::FollowTargetLocation(self.position()?)
            }
            _ => return Err(Self::err_at(&at, ParseErrorKind::UnknownAction(name))),
        };
        self.expect(Tok::RParen)?;
        Ok(action)
    }

    fn entity(&mut self) -> Result<SpriteId, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(name) => self
                .dict
                .lookup(name)
                .ok_or_else(|| Self::err_at(&t, ParseErrorKind::UnknownSprite(name.clone()))),
            Tok::Int(n) if (*n as usize) < self.dict.len() && *n <= u16::MAX as u64 => {
                Ok(SpriteId(*n as u16))
            }
            Tok::Int(n) => Err(Self::err_at(&t, ParseErrorKind::IdOutOfRange(*n))),
            _ => Err(Self::expected(&t, "a sprite name or id")),
        }
    }

    fn direction(&mut self) -> Result<Direction, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(word) => Direction::from_keyword(word)
                .ok_or_else(|| Self::err_at(&t, ParseErrorKind::UnknownDirection(word.clone()))),
            _ => Err(Self::expected(&t, "a direction")),
        }
    }

    fn position(&mut self) -> Result<Position, ParseError> {
        let first = self.peek().clone();
        let col = self.integer()?;
        self.expect(Tok::Comma)?;
        let row = self.integer()?;
        if col >= self.dict.width() as u64 || row >= self.dict.height() as u64 {
            return Err(Self::err_at(
                &first,
                ParseErrorKind::PositionOutOfRange { col, row },
            ));
        }
        Ok(Position::new(col as u16, row as u16))
    }

    fn integer(&mut self) -> Result<u64, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Int(n) => Ok(n),
            _ => Err(Self::expected(&t, "an integer")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::print_program;
    use proptest::prelude::*;

    fn pacman() -> Dictionary {
        let names = ["PACMAN", "BLINKY", "GHOST", "EYES", "POWERPELLET", "EMPTY"];
        Dictionary::new(names.iter().map(|s| s.to_string()).collect(), 8, 8)
    }

    #[test]
    fn parses_single_rule() {
        let d = pacman();
        let p = parse_program("IF (exists_in_map(PACMAN)) THEN follow_entity(PACMAN)", &d).unwrap();
        assert_eq!(
            p.rules,
            vec![Rule::new(
                Condition::ExistsInMap(SpriteId(0)),
                Action::FollowEntity(SpriteId(0))
            )]
        );
    }

    #[test]
    fn empty_and_comment_only_inputs() {
        let d = pacman();
        assert!(parse_program("", &d).unwrap().is_empty());
        assert!(parse_program("  # nothing here\n\n", &d).unwrap().is_empty());
    }

    #[test]
    fn keywords_are_case_insensitive_and_ids_accepted() {
        let d = pacman();
        let p = parse_program("if (EXISTS_IN_MAP(0)) then Follow_Direction(up)", &d).unwrap();
        assert_eq!(
            p.rules[0],
            Rule::new(
                Condition::ExistsInMap(SpriteId(0)),
                Action::FollowDirection(Direction::Up)
            )
        );
    }

    #[test]
    fn errors_carry_positions() {
        let d = pacman();
        let e = parse_program("IF (exists_in_map(PACMAN)) THEN\n  follow_entity(INKY)", &d).unwrap_err();
        assert_eq!((e.line, e.col), (2, 17));
        assert_eq!(e.kind, ParseErrorKind::UnknownSprite("INKY".into()));

        let e = parse_program("IF (exists_in_position(8,0)) THEN change_to_entity(EMPTY)", &d)
            .unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::PositionOutOfRange { col: 8, row: 0 });

        let e = parse_program("IF (exists_in_map(6)) THEN change_to_entity(EMPTY)", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::IdOutOfRange(6));

        let e = parse_program("IF (teleport(PACMAN)) THEN change_to_entity(EMPTY)", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownCondition("teleport".into()));

        let e = parse_program("IF (exists_in_map(PACMAN) THEN", &d).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Expected { .. }));

        let e = parse_program("IF @", &d).unwrap_err();
        assert_eq!((e.line, e.col, e.kind), (1, 4, ParseErrorKind::UnexpectedChar('@')));

        let e = parse_program("IF (exists_in_position(99999999999999999999,0))", &d).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::IntegerTooLarge);
    }

    #[test]
    fn printer_prefers_names_and_falls_back_to_ids() {
        let d = Dictionary::new(vec!["A".into(), "has space".into(), "A".into()], 4, 4);
        let p = Program::new(vec![
            Rule::new(Condition::ExistsInMap(SpriteId(0)), Action::ChangeToEntity(SpriteId(1))),
            Rule::new(Condition::Neighboring(SpriteId(2)), Action::FollowEntity(SpriteId(9))),
        ]);
        let text = print_program(&p, &d);
        assert_eq!(
            text,
            "IF (exists_in_map(A)) THEN change_to_entity(1)\nIF (neighboring(2)) THEN follow_entity(9)\n"
        );
    }

    proptest! {
        #[test]
        fn parser_never_panics(text in "[ -~\n]{0,80}") {
            let _ = parse_program(&text, &pacman());
        }

        #[test]
        fn parser_survives_token_soup(
            words in prop::collection::vec(
                prop::sample::select(vec![
                    "IF", "THEN", "(", ")", ",", "exists_in_map", "neighbours", "follow target",
                    "PACMAN", "3", "UP", "#x\n", "exists in position", "99",
                ]),
                0..20,
            )
        ) {
            let _ = parse_program(&words.join(" "), &pacman());
        }
    }
}
