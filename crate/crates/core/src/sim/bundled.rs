//! Scenario files shipped with the crate, one per reproduced figure.

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../scenarios/", $name, ".scn")))),*]
    };
}

/// `(name, file text)` pairs.
pub const BUNDLED: &[(&str, &str)] = bundled!(
    "fig_error_window",
    "fig_clientrate",
    "fig_filesize",
    "fig_ttl",
    "fig_hideclients",
    "fig_wndsize",
    "fig_wnd_udp",
    "fig_wndsize_sims",
);

/// Text of a bundled file, by name with or without the `.scn` suffix.
pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scn").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
