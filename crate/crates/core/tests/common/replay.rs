//! Independent re-simulation of generated stories from their surface text.
//!
//! Statements are re-parsed from the English templates, world state is
//! rebuilt, and the answer and support set are derived from scratch. Nothing
//! here calls into the generator.

use std::collections::{BTreeMap, BTreeSet};

use memqa_core::corpus::Story;

#[derive(Clone, Debug, PartialEq)]
enum Action {
    Move { who: String, to: String },
    Grab { who: String, what: String },
    Drop { who: String, what: String },
    Is { who: String, at: String, negated: bool },
}

fn parse_statement(tokens: &[String]) -> Result<Action, String> {
    let t: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let who = t.first().ok_or("empty statement")?.to_string();
    let action = match &t[1..] {
        [verb, "to", "the", to] if ["went", "moved", "journeyed", "travelled"].contains(verb) => Action::Move {
            who,
            to: to.to_string(),
        },
        ["picked", "up", "the", what] | ["got" | "grabbed" | "took", "the", what] => Action::Grab {
            who,
            what: what.to_string(),
        },
        ["put", "down", "the", what] | ["dropped" | "discarded" | "left", "the", what] => Action::Drop {
            who,
            what: what.to_string(),
        },
        ["is", "in", "the", at] => Action::Is {
            who,
            at: at.to_string(),
            negated: false,
        },
        ["is", "not", "in", "the", at] | ["is", "no", "longer", "in", "the", at] => Action::Is {
            who,
            at: at.to_string(),
            negated: true,
        },
        _ => return Err(format!("unrecognised statement {t:?}")),
    };
    Ok(action)
}

#[derive(Default)]
struct State {
    /// Known location and the statement that established it (or ruled a
    /// location out, for negated claims).
    place: BTreeMap<String, (Option<String>, u32)>,
    /// Last statement that located the person by moving them.
    last_move: BTreeMap<String, u32>,
    holder: BTreeMap<String, Option<String>>,
    /// (person, object) -> last statement in which the person took or put down the object
    handled: BTreeMap<(String, String), u32>,
    last_grab: BTreeMap<(String, String), u32>,
    /// Location ruled out by the person's latest negated claim.
    ruled_out: BTreeMap<String, String>,
}

impl State {
    fn apply(&mut self, id: u32, action: &Action) {
        match action {
            Action::Move { who, to } => {
                self.place.insert(who.clone(), (Some(to.clone()), id));
                self.last_move.insert(who.clone(), id);
                self.ruled_out.remove(who);
            }
            Action::Is { who, at, negated } => {
                if *negated {
                    self.place.insert(who.clone(), (None, id));
                    self.ruled_out.insert(who.clone(), at.clone());
                } else {
                    self.place.insert(who.clone(), (Some(at.clone()), id));
                    self.ruled_out.remove(who);
                }
            }
            Action::Grab { who, what } => {
                self.holder.insert(what.clone(), Some(who.clone()));
                self.handled.insert((who.clone(), what.clone()), id);
                self.last_grab.insert((who.clone(), what.clone()), id);
            }
            Action::Drop { who, what } => {
                self.holder.insert(what.clone(), None);
                self.handled.insert((who.clone(), what.clone()), id);
            }
        }
    }

    fn carrying(&self, who: &str) -> Vec<String> {
        self.holder
            .iter()
            .filter(|(_, h)| h.as_deref() == Some(who))
            .map(|(o, _)| o.clone())
            .collect()
    }
}

const NUMBERS: [&str; 6] = ["none", "one", "two", "three", "four", "five"];

/// Answer set and support set implied by replaying `statements` and asking
/// `question`. `Err` when the question cannot be answered from them.
fn derive(statements: &[(u32, Action)], question: &[String]) -> Result<(BTreeSet<String>, BTreeSet<u32>), String> {
    let mut st = State::default();
    for (id, a) in statements {
        st.apply(*id, a);
    }
    let q: Vec<&str> = question.iter().map(String::as_str).collect();
    let one = |w: &str| BTreeSet::from([w.to_string()]);
    match q.as_slice() {
        ["where", "is", "the", obj] => {
            let who = st
                .holder
                .get(*obj)
                .cloned()
                .flatten()
                .ok_or(format!("nobody holds the {obj}"))?;
            let (at, _) = st.place.get(&who).ok_or(format!("{who} never located"))?;
            let at = at.clone().ok_or(format!("{who} has no known location"))?;
            let grab = st.last_grab[&(who.clone(), obj.to_string())];
            let moved = *st.last_move.get(&who).ok_or(format!("{who} never moved"))?;
            Ok((one(&at), BTreeSet::from([grab, moved])))
        }
        ["where", "is", who] => {
            let (at, id) = st.place.get(*who).ok_or(format!("{who} never located"))?;
            Ok((one(at.as_deref().ok_or("location unknown")?), BTreeSet::from([*id])))
        }
        ["is", who, "in", "the", asked] => {
            let (at, id) = st.place.get(*who).ok_or(format!("{who} never located"))?;
            let answer = match at {
                Some(l) => l == asked,
                None if st.ruled_out.get(*who).map(String::as_str) == Some(*asked) => false,
                None => return Err(format!("cannot tell whether {who} is in the {asked}")),
            };
            Ok((one(if answer { "yes" } else { "no" }), BTreeSet::from([*id])))
        }
        ["how", "many", "objects", "is", who, "carrying"] | ["what", "is", who, "carrying"] => {
            let support: BTreeSet<u32> = st
                .handled
                .iter()
                .filter(|((p, _), _)| p == who)
                .map(|(_, &id)| id)
                .collect();
            let held = st.carrying(who);
            let answers = if q[0] == "how" {
                one(NUMBERS[held.len()])
            } else if held.is_empty() {
                one("nothing")
            } else {
                held.into_iter().collect()
            };
            Ok((answers, support))
        }
        _ => Err(format!("unrecognised question {q:?}")),
    }
}

/// Replays `story` and checks its answers and supporting facts.
///
/// The support set must equal the one derived from the full replay, and
/// replaying only the supporting statements must reproduce the answer.
pub fn check_story(story: &Story) -> Result<(), String> {
    let actions: Vec<(u32, Action)> = story
        .statements
        .iter()
        .map(|s| parse_statement(&s.tokens).map(|a| (s.id, a)))
        .collect::<Result<_, _>>()?;
    let (answers, support) = derive(&actions, &story.question)?;
    if answers != story.answer_set() {
        return Err(format!("answer {:?}, replay gives {answers:?}", story.answers));
    }
    if support != story.support_set() {
        return Err(format!("support {:?}, replay gives {support:?}", story.supporting_ids));
    }
    let only_support: Vec<(u32, Action)> = actions.into_iter().filter(|(id, _)| support.contains(id)).collect();
    let (from_support, _) = derive(&only_support, &story.question)?;
    if from_support != answers {
        return Err(format!("supporting facts alone give {from_support:?}"));
    }
    Ok(())
}
