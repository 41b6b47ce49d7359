//! Experiment configs shipped with the binary.

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

macro_rules! preset {
    ($name:literal, $summary:literal) => {
        Preset {
            name: $name,
            summary: $summary,
            text: include_str!(concat!("../presets/", $name, ".toml")),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("storage_baseline", "store and recall one probe; polariton diagnostics"),
    preset!("fig2a_theory", "closed-form XPM phase against signal Rabi frequency (lab units)"),
    preset!("fig2b_spm", "recalled phase against probe amplitude under a fixed signal"),
    preset!("fig3b_double", "double storage with a hold; k-t trajectories"),
    preset!("fig4a_gate", "conditional phase and fidelity against time"),
    preset!("fig4b_tomo", "Choi matrix of the gate at t = 15"),
];

pub fn get(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
