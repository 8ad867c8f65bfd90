//! Shared fixtures for the pipeline benchmarks.

use metafp_core::metasurface::{ControlCode, Surface};
use metafp_core::phy::{generate_dataset, Dataset, Scenario};
use metafp_core::rng::SeedTree;

pub struct Fixture {
    pub surface: Surface,
    pub scenario: Scenario,
    pub codes: Vec<ControlCode>,
    pub seeds: SeedTree,
}

impl Fixture {
    /// Default surface, 2.54 m line-of-sight link on channel 6, `codes` spread codes.
    pub fn new(codes: usize) -> Self {
        let surface = Surface::default();
        let mut scenario = Scenario::line("bench", 2.54);
        scenario.channels = vec![6];
        let codes = surface.spread_codes(surface.calibration.cv, codes);
        Self {
            surface,
            scenario,
            codes,
            seeds: SeedTree::new(1),
        }
    }

    pub fn dataset(&self, packets: usize) -> Dataset {
        generate_dataset(&self.surface, &self.scenario, &self.codes, packets, &self.seeds).expect("valid fixture")
    }
}
