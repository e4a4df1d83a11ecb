use serde::{Deserialize, Serialize};

use crate::env::{Observation, View};

/// One completed turn as it is replayed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn: u32,
    pub reasoning: String,
    pub action: String,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub system: String,
    pub preamble: String,
    /// Per-turn reasoning stages, rendered in order as (i), (ii), ...
    pub stages: Vec<String>,
    pub grammar: String,
    pub final_turn: String,
    pub reprompt: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: "You are a geolocation agent exploring street-level panoramas. \
                     You can turn in place and walk along the street network."
                .into(),
            preamble: "Work out where in the world the current view was captured. \
                       Each turn you see one view and choose one action."
                .into(),
            stages: vec![
                "Describe the geographic and cultural clues you can see: vegetation, terrain, \
                 road markings, signage, script, architecture, vehicles."
                    .into(),
                "State which evidence is still missing, unreadable or ambiguous.".into(),
                "Pick the single action most likely to resolve that uncertainty.".into(),
                "Revise your location hypothesis with what the new view shows, and give it as a GUESS line.".into(),
            ],
            grammar: "End your reply with one fenced block:\n\
                      ```action\n\
                      GUESS <lat>,<lon> \"<country>/<city>/<street>\" <confidence 0-1>\n\
                      <ROTATE <+/-degrees> | MOVE | STOP>\n\
                      ```\n\
                      ROTATE turns in place (positive = right). MOVE walks to the next panorama along \
                      the link closest to your heading. A GUESS line on its own ends the episode with \
                      that answer; STOP ends it with your latest GUESS."
                .into(),
            final_turn: "This is your last turn: reply with a GUESS line only.".into(),
            reprompt: "Your previous reply had no valid command block. Reply again using exactly the grammar above."
                .into(),
        }
    }
}

const ROMAN: [&str; 8] = ["i", "ii", "iii", "iv", "v", "vi", "vii", "viii"];

fn describe_view(view: &View) -> String {
    match view {
        View::Rendered { fov, width, height, yaw: _, pitch, .. } => {
            format!("perspective image attached ({width}x{height}, {fov} deg field of view, pitch {pitch} deg)")
        }
        View::Panorama { width, height, center_offset, .. } => format!(
            "full 360-degree panorama attached ({width}x{height}); its center column lies {center_offset:.1} deg clockwise of your heading"
        ),
        View::Descriptor { fov, .. } => format!("no imagery available for this position ({fov} deg field of view)"),
    }
}

/// Deterministic per-turn prompt. Contains only what the agent may know:
/// instructions, its own transcript and the observation.
pub fn build_prompt(
    obs: &Observation,
    history: &[HistoryEntry],
    templates: &PromptTemplates,
    last_turn: bool,
) -> String {
    let mut out = String::new();
    out.push_str(&templates.preamble);
    out.push_str("\n\nEach turn:\n");
    for (i, stage) in templates.stages.iter().enumerate() {
        let numeral = ROMAN.get(i).map(|s| s.to_string()).unwrap_or_else(|| (i + 1).to_string());
        out.push_str(&format!("({numeral}) {stage}\n"));
    }

    out.push_str("\nHistory:\n");
    if history.is_empty() {
        out.push_str("(none)\n");
    }
    for h in history {
        out.push_str(&format!(
            "[turn {}]\n{}\n> action: {}\n> result: {}\n",
            h.turn,
            h.reasoning.trim(),
            h.action,
            h.result
        ));
    }

    out.push('\n');
    out.push_str(&templates.grammar);
    out.push_str("\n\nCurrent observation:\n");
    out.push_str(&format!("turn: {}\nheading: {:.1} deg\n", obs.turn, obs.heading));
    out.push_str(&format!("links: {}", obs.node_degree));
    for l in &obs.links {
        out.push_str(&format!("; {:.1} deg right of heading, {:.1} m", l.relative_bearing, l.length_m));
    }
    out.push_str(&format!("\nview: {}\n", describe_view(&obs.view)));
    if last_turn {
        out.push('\n');
        out.push_str(&templates.final_turn);
        out.push('\n');
    }
    out
}
