use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PersonaError, PersonaSpec, PersonaVariant, Strategy};
use crate::corpus::Thread;
use crate::hashing::{sha256_hex, FieldDigest};

const ZERO_SHOT: &str = include_str!("../../templates/zero_shot.txt");
const FEW_SHOT: &str = include_str!("../../templates/few_shot.txt");

const ZERO_SHOT_SLOTS: [&str; 2] = ["leaning", "thread"];
const FEW_SHOT_SLOTS: [&str; 4] = ["usernames", "biographies", "tweets", "thread"];

/// What fills the Zero-Shot `{leaning}` slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaningSlot {
    /// The leaning score with two decimals, e.g. `-0.64`.
    #[default]
    Numeric,
    /// The class name, e.g. `Republican`.
    ClassWord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub zero_shot: String,
    pub few_shot: String,
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            zero_shot: ZERO_SHOT.to_string(),
            few_shot: FEW_SHOT.to_string(),
        }
    }

    /// Reads `zero_shot.txt` and `few_shot.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, PersonaError> {
        let t = Self {
            zero_shot: std::fs::read_to_string(dir.join("zero_shot.txt"))?,
            few_shot: std::fs::read_to_string(dir.join("few_shot.txt"))?,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        for (template, text, slots) in [
            ("zero_shot", &self.zero_shot, &ZERO_SHOT_SLOTS[..]),
            ("few_shot", &self.few_shot, &FEW_SHOT_SLOTS[..]),
        ] {
            for slot in slots {
                if !text.contains(&format!("{{{slot}}}")) {
                    return Err(PersonaError::TemplateSlotAbsent { template, slot });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, strategy: Strategy) -> &str {
        match strategy {
            Strategy::ZeroShot => &self.zero_shot,
            Strategy::FewShot => &self.few_shot,
        }
    }

    pub fn digest(&self) -> String {
        let mut d = FieldDigest::new("templates");
        d.push_str("zero_shot", &self.zero_shot).push_str("few_shot", &self.few_shot);
        d.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub bytes: String,
    pub template_id: Strategy,
    pub thread_rendering: String,
    /// SHA-256 of `bytes`.
    pub content_hash: String,
}

fn slot_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("static regex"))
}

/// Single-pass substitution, so slot markers inside values stay literal.
fn substitute(template: &str, values: &HashMap<&str, String>) -> Result<String, PersonaError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut last = 0;
    for caps in slot_pattern().captures_iter(template) {
        let whole = caps.get(0).expect("match");
        let name = &caps[1];
        let value = values.get(name).ok_or_else(|| PersonaError::MissingSlot(name.to_string()))?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// One `@author: text` line per tweet, root first, ending with the parent.
pub fn render_thread(thread: &Thread) -> String {
    thread
        .conversation()
        .map(|t| format!("@{}: {}", t.author_id, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn json_list<S: AsRef<str>>(items: &[S]) -> String {
    let v: Vec<&str> = items.iter().map(AsRef::as_ref).collect();
    serde_json::to_string(&v).expect("strings serialize")
}

pub fn format_leaning(score: f64) -> String {
    let s = format!("{score:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn render_prompt(
    spec: &PersonaSpec,
    thread: &Thread,
    templates: &Templates,
    leaning_slot: LeaningSlot,
) -> Result<RenderedPrompt, PersonaError> {
    let thread_rendering = render_thread(thread);
    let mut values: HashMap<&str, String> = HashMap::new();
    values.insert("thread", thread_rendering.clone());
    match &spec.variant {
        PersonaVariant::ZeroShot { leaning, class } => {
            let v = match leaning_slot {
                LeaningSlot::Numeric => format_leaning(*leaning),
                LeaningSlot::ClassWord => class.name().to_string(),
            };
            values.insert("leaning", v);
        }
        PersonaVariant::FewShot {
            usernames,
            bios,
            sample_tweets,
        } => {
            values.insert("usernames", json_list(usernames));
            values.insert("biographies", json_list(bios));
            let texts: Vec<&str> = sample_tweets.iter().map(|t| t.text.as_str()).collect();
            values.insert("tweets", json_list(&texts));
        }
    }
    let strategy = spec.strategy();
    let bytes = substitute(templates.get(strategy), &values)?;
    Ok(RenderedPrompt {
        content_hash: sha256_hex(&bytes),
        bytes,
        template_id: strategy,
        thread_rendering,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawTweet;
    use crate::stance::Stance;
    use chrono::{TimeZone, Utc};

    fn raw(id: &str, author: &str, text: &str, parent: Option<&str>) -> RawTweet {
        RawTweet {
            tweet_id: id.into(),
            author_id: author.into(),
            text: text.into(),
            parent_id: parent.map(Into::into),
            timestamp: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        }
    }

    fn thread() -> Thread {
        Thread::new(
            raw("p", "alice", "Who are you voting for?", None),
            raw("r", "bob", "not telling", Some("p")),
        )
        .unwrap()
    }

    fn zero(leaning: f64) -> PersonaSpec {
        PersonaSpec {
            user_id: "bob".into(),
            variant: PersonaVariant::ZeroShot {
                leaning,
                class: Stance::Democrat,
            },
        }
    }

    #[test]
    fn builtin_templates_carry_their_slots() {
        Templates::builtin().validate().unwrap();
        let t = Templates::builtin();
        assert!(t.few_shot.contains("- **Your Usernames:** {usernames} \n"));
        assert!(t.few_shot.contains("- **Your Tweets:** {tweets}  \n"));
        assert!(t.zero_shot.ends_with("with not more than 100 characters."));
    }

    #[test]
    fn zero_shot_renders_leaning_block() {
        let p = render_prompt(&zero(-0.64), &thread(), &Templates::builtin(), LeaningSlot::Numeric).unwrap();
        assert!(p.bytes.starts_with("### Your Profile:\nYou are a Twitter user with a -0.64 political leaning:\n"));
        assert!(p.bytes.contains("- Values around -1 indicate left-leaning views\n"));
        assert!(p.bytes.contains("Here is the conversation thread so far:\n@alice: Who are you voting for?\n\n### Task:"));
        assert_eq!(p.content_hash, sha256_hex(&p.bytes));
        let again = render_prompt(&zero(-0.64), &thread(), &Templates::builtin(), LeaningSlot::Numeric).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn class_word_mode() {
        let p = render_prompt(&zero(-0.64), &thread(), &Templates::builtin(), LeaningSlot::ClassWord).unwrap();
        assert!(p.bytes.contains("with a Democrat political leaning"));
    }

    #[test]
    fn leaning_formatting() {
        assert_eq!(format_leaning(1.0), "1.00");
        assert_eq!(format_leaning(-0.64), "-0.64");
        assert_eq!(format_leaning(-0.001), "0.00");
        assert_eq!(format_leaning(0.0), "0.00");
    }

    #[test]
    fn few_shot_empty_bios() {
        let spec = PersonaSpec {
            user_id: "bob".into(),
            variant: PersonaVariant::FewShot {
                usernames: vec!["bob".into()],
                bios: vec![],
                sample_tweets: vec![raw("h", "bob", "say \"hi\" {thread}", None)],
            },
        };
        let p = render_prompt(&spec, &thread(), &Templates::builtin(), LeaningSlot::Numeric).unwrap();
        assert!(p.bytes.contains("- **Your Bios:** []\n"));
        assert!(p.bytes.contains("- **Your Usernames:** [\"bob\"] \n"));
        // slot markers in user text are not substituted again
        assert!(p.bytes.contains(r#"- **Your Tweets:** ["say \"hi\" {thread}"]  "#));
    }

    #[test]
    fn missing_slot_value_is_an_error() {
        let t = Templates {
            zero_shot: "{leaning} {mood} {thread}".into(),
            few_shot: FEW_SHOT.into(),
        };
        let err = render_prompt(&zero(0.0), &thread(), &t, LeaningSlot::Numeric).unwrap_err();
        assert!(matches!(err, PersonaError::MissingSlot(s) if s == "mood"));
    }

    #[test]
    fn context_precedes_parent() {
        let t = thread().with_context(vec![raw("root", "carol", "Election day!", None)]);
        assert_eq!(render_thread(&t), "@carol: Election day!\n@alice: Who are you voting for?");
    }
}
