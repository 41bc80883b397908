//! Built-in configurations. `desk/*` runs on a laptop; `paper/*` carries
//! the full-scale parameters and takes GPU-days of CPU time.

pub const NAMES: &[&str] = &[
    "desk/base",
    "desk/label-free",
    "desk/composite",
    "desk/smoke",
    "paper/base",
    "paper/label-free",
    "paper/short-correlation",
    "paper/high-variance",
    "paper/composite",
];

pub fn get(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    Some(match name {
        "desk/base" => include_str!("../configs/desk/base.toml"),
        "desk/label-free" => include_str!("../configs/desk/label-free.toml"),
        "desk/composite" => include_str!("../configs/desk/composite.toml"),
        "desk/smoke" => include_str!("../configs/desk/smoke.toml"),
        "paper/base" => include_str!("../configs/paper/base.toml"),
        "paper/label-free" => include_str!("../configs/paper/label-free.toml"),
        "paper/short-correlation" => include_str!("../configs/paper/short-correlation.toml"),
        "paper/high-variance" => include_str!("../configs/paper/high-variance.toml"),
        "paper/composite" => include_str!("../configs/paper/composite.toml"),
        _ => return None,
    })
}
