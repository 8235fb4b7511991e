//! Shared inputs for the benchmarks.

use retro_core::fixtures::{generate, Domain, Fixture, FixtureSpec};

pub fn fixture(domain: Domain) -> Fixture {
    generate(&FixtureSpec::new(domain, 0)).expect("default fixtures generate")
}
