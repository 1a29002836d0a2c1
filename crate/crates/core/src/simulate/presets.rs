use super::experiment::SimConfig;
use super::{six_var_model, two_var_model, NoiseModel};
use crate::lingam::IcaConfig;

/// Named simulation configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
}

const PRESETS: [Preset; 10] = [
    Preset {
        name: "paper-2var-b0",
        description: "2 variables, b = 0; 1280 datasets, Q = 1000",
    },
    Preset {
        name: "paper-2var-b001",
        description: "2 variables, b = 0.01; 1280 datasets, Q = 1000",
    },
    Preset {
        name: "paper-2var-b01",
        description: "2 variables, b = 0.1; 1280 datasets, Q = 1000",
    },
    Preset {
        name: "paper-6var-b0",
        description: "6 variables, b = 0; 1280 datasets, Q = 1000",
    },
    Preset {
        name: "paper-6var-b05",
        description: "6 variables, b = 0.5; 1280 datasets, Q = 1000",
    },
    Preset {
        name: "desk-2var-b0",
        description: "2 variables, b = 0; 200 datasets, Q = 500",
    },
    Preset {
        name: "desk-2var-b001",
        description: "2 variables, b = 0.01; 200 datasets, Q = 500",
    },
    Preset {
        name: "desk-2var-b01",
        description: "2 variables, b = 0.1; 200 datasets, Q = 500",
    },
    Preset {
        name: "desk-6var-b0",
        description: "6 variables, b = 0; 200 datasets, Q = 500",
    },
    Preset {
        name: "desk-6var-b05",
        description: "6 variables, b = 0.5; 200 datasets, Q = 500",
    },
];

pub fn preset_names() -> Vec<Preset> {
    PRESETS.to_vec()
}

pub fn default_alpha_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

pub fn preset(name: &str) -> Option<SimConfig> {
    let (scale, model) = name.split_once('-')?;
    let (datasets, replicates) = match scale {
        "paper" => (1280, 1000),
        "desk" => (200, 500),
        _ => return None,
    };
    let (b, focus) = match model {
        "2var-b0" => (two_var_model(0.0), "x2<-x1:+"),
        "2var-b001" => (two_var_model(0.01), "x2<-x1:+"),
        "2var-b01" => (two_var_model(0.1), "x2<-x1:+"),
        "6var-b0" => (six_var_model(0.0), "x3<-x2:+"),
        "6var-b05" => (six_var_model(0.5), "x3<-x2:+"),
        _ => return None,
    };
    Some(SimConfig {
        name: name.to_string(),
        model: b.to_rows(),
        noise: NoiseModel::Laplace { variance: 2.0 },
        n: 1000,
        datasets,
        scales_min: 1.0 / 9.0,
        scales_max: 9.0,
        num_scales: 13,
        replicates,
        ica: IcaConfig::default(),
        h: 3,
        alpha_grid: default_alpha_grid(),
        master_seed: 0,
        focus: focus.to_string(),
    })
}
