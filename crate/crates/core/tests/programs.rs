use retro_core::dsl::Direction;
use retro_core::{parse_program, print_program, Action, Condition, Dictionary, Position, Rule, SpriteId};

fn dict(names: &[&str]) -> Dictionary {
    Dictionary::new(names.iter().map(|s| s.to_string()).collect(), 8, 8)
}

const CHASE_NAMES: [&str; 6] = ["PACMAN", "BLINKY", "GHOST", "EYES", "POWERPELLET", "EMPTY"];
const RIVER_NAMES: [&str; 7] = ["PLANE", "PELLET", "BLACKBOAT", "FUEL", "GREENBOAT", "EMPTY", "WALL"];

const BLINKY: &str = "IF (exists in map(PACMAN))
THEN follow entity(PACMAN)
IF (neighboring entities(PACMAN, POWERPELLET))
THEN change to entity(GHOST)
IF (is neighboring(GHOST))
THEN change to entity(PACMAN)";

const GHOST: &str = "IF (is neighboring(PACMAN))
THEN change to entity(PACMAN)
IF (is neighboring(PACMAN))
THEN change to entity(EMPTY)";

const POWERPELLET: &str = "IF (is neighboring(PACMAN))
THEN change to entity(PACMAN)";

const EYES: &str = "IF (exists in map(PACMAN))
THEN change to entity(EMPTY)";

const PELLET: &str = "IF (exists in map(PLANE))
THEN follow direction(UP)
IF (exists in position(4,1))
THEN change to entity(EMPTY)
IF (exists in position(4,3))
THEN change to entity(EMPTY)
IF (exists in position(3,1))
THEN change to entity(EMPTY)";

const FUEL: &str = "IF (exists in position(7,7))
THEN follow target(6,7)
IF (is neighboring(PELLET))
THEN change to entity(EMPTY)";

const GREENBOAT: &str = "IF (exists in map(PLANE))
THEN follow target(1,2)";

#[test]
fn chase_programs_parse_as_written() {
    let d = dict(&CHASE_NAMES);
    let id = |n: &str| d.lookup(n).unwrap();
    let blinky = parse_program(BLINKY, &d).unwrap();
    assert_eq!(
        blinky.rules,
        vec![
            Rule::new(Condition::ExistsInMap(id("PACMAN")), Action::FollowEntity(id("PACMAN"))),
            Rule::new(Condition::Neighbours(id("PACMAN"), id("POWERPELLET")), Action::ChangeToEntity(id("GHOST"))),
            Rule::new(Condition::Neighboring(id("GHOST")), Action::ChangeToEntity(id("PACMAN"))),
        ]
    );
    assert_eq!(parse_program(GHOST, &d).unwrap().len(), 2);
    assert_eq!(
        parse_program(POWERPELLET, &d).unwrap().rules,
        vec![Rule::new(Condition::Neighboring(id("PACMAN")), Action::ChangeToEntity(id("PACMAN")))]
    );
    assert_eq!(parse_program(EYES, &d).unwrap().len(), 1);
}

#[test]
fn river_programs_parse_as_written() {
    let d = dict(&RIVER_NAMES);
    let pellet = parse_program(PELLET, &d).unwrap();
    assert_eq!(pellet.rules[0].action, Action::FollowDirection(Direction::Up));
    assert_eq!(pellet.rules[3].condition, Condition::ExistsInPosition(Position::new(3, 1)));
    let fuel = parse_program(FUEL, &d).unwrap();
    assert_eq!(
        fuel.rules[0],
        Rule::new(
            Condition::ExistsInPosition(Position::new(7, 7)),
            Action::FollowTargetLocation(Position::new(6, 7))
        )
    );
    assert_eq!(fuel.rules[1].condition, Condition::Neighboring(SpriteId(1)));
    assert_eq!(parse_program(GREENBOAT, &d).unwrap().len(), 1);
    assert!(parse_program("", &d).unwrap().is_empty());
}

#[test]
fn printed_programs_parse_back_identically() {
    for (names, texts) in [
        (&CHASE_NAMES[..], &[BLINKY, GHOST, POWERPELLET, EYES][..]),
        (&RIVER_NAMES[..], &[PELLET, FUEL, GREENBOAT][..]),
    ] {
        let d = dict(names);
        for text in texts {
            let p = parse_program(text, &d).unwrap();
            let printed = print_program(&p, &d);
            assert_eq!(parse_program(&printed, &d).unwrap(), p);
            assert_eq!(printed.lines().count(), p.len());
        }
    }
}
