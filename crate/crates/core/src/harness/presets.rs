use crate::netsim::LossModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub rtt_ms: f64,
    pub loss: LossModel,
    pub description: &'static str,
}

const fn ge(name: &'static str, rtt_ms: f64, p: f64, r: f64, description: &'static str) -> Preset {
    Preset {
        name,
        rtt_ms,
        loss: LossModel::GilbertElliott { p, r },
        description,
    }
}

const fn wifi(name: &'static str, rate: f64) -> Preset {
    Preset {
        name,
        rtt_ms: WIRELESS_RTT_MS,
        loss: LossModel::Uniform { rate },
        description: "campus Wi-Fi, uniform per-packet loss",
    }
}

/// Round-trip time assumed for the wireless presets, whose measurements
/// report loss rates only.
pub const WIRELESS_RTT_MS: f64 = 10.0;

pub const PRESETS: &[Preset] = &[
    ge("FL-PA-2", 31.408, 3.0e-3, 128.0e-3, "Florida - Pennsylvania"),
    ge("LA-NY-1", 66.015, 4.0e-3, 81.0e-3, "Los Angeles - New York"),
    ge("FL-PA-1", 31.387, 2.5e-3, 43.1e-3, "Florida - Pennsylvania"),
    ge("JPN-SWI", 259.319, 0.6e-3, 7.7e-3, "Tokyo - Geneva"),
    ge("LA-NY-2", 66.035, 9.0e-3, 82.0e-3, "Los Angeles - New York"),
    wifi("WIFI-10", 0.10),
    wifi("WIFI-12", 0.12),
    wifi("WIFI-16", 0.16),
    wifi("WIFI-20", 0.20),
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}
