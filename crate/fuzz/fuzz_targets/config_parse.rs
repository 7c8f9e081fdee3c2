#![no_main]

use knapp_lab::config::{ExperimentConfig, RawConfig};
use knapp_lab::preset::Preset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(raw) = RawConfig::parse(text) else { return };
    let Ok(cfg) = ExperimentConfig::from_raw(&raw) else { return };
    // Named presets print as literals the preset parser accepts.
    if !matches!(cfg.preset, Preset::CustomSphere { .. } | Preset::CustomFlat { .. }) {
        let again = Preset::parse(&cfg.preset.to_string());
        assert!(again.is_ok(), "{:?}", cfg.preset);
    }
});
