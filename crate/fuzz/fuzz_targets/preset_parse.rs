#![no_main]

use knapp_lab::preset::{parse_matrix, parse_motion, Preset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|s: &str| {
    if let Ok(p) = Preset::parse(s) {
        let text = p.to_string();
        assert_eq!(Preset::parse(&text).ok().as_ref(), Some(&p), "{text}");
        let _ = p.dim();
    }
    let _ = parse_matrix(s);
    let _ = parse_motion(s);
});
