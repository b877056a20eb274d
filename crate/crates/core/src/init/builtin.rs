//! The built-in task templates.

use super::template::TaskTemplate;
use crate::error::{Error, Result};

pub const PUTTPUTT: &str = include_str!("../../../../templates/puttputt.json");
pub const BILLIARDS: &str = include_str!("../../../../templates/billiards.json");
pub const INVISIBALL: &str = include_str!("../../../../templates/invisiball.json");

pub const NAMES: &[&str] = &["puttputt", "billiards", "invisiball"];

/// Source text of a built-in template.
pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "puttputt" => Some(PUTTPUTT),
        "billiards" => Some(BILLIARDS),
        "invisiball" => Some(INVISIBALL),
        _ => None,
    }
}

pub fn template(name: &str) -> Result<TaskTemplate> {
    let text = source(name).ok_or_else(|| Error::Template {
        key: "name".into(),
        reason: format!("no built-in template {name:?}; known: {}", NAMES.join(", ")),
    })?;
    TaskTemplate::from_json(text)
}

pub fn puttputt() -> TaskTemplate {
    TaskTemplate::from_json(PUTTPUTT).expect("built-in template parses")
}

pub fn billiards() -> TaskTemplate {
    TaskTemplate::from_json(BILLIARDS).expect("built-in template parses")
}

pub fn invisiball() -> TaskTemplate {
    TaskTemplate::from_json(INVISIBALL).expect("built-in template parses")
}
