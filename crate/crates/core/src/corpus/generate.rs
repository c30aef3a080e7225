use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Result, Statement, Story};

/// Answers to counting questions, indexed by count.
pub const NUMBER_WORDS: [&str; 6] = ["none", "one", "two", "three", "four", "five"];

const MOVE_VERBS: [&str; 4] = ["went", "moved", "journeyed", "travelled"];
const GRAB_VERBS: [&[&str]; 4] = [&["picked", "up"], &["got"], &["grabbed"], &["took"]];
const DROP_VERBS: [&[&str]; 4] = [&["dropped"], &["put", "down"], &["discarded"], &["left"]];

const MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskFamily {
    OneFact,
    TwoFacts,
    YesNo,
    Counting,
    Negation,
    ListsSets,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 6] = [
        TaskFamily::OneFact,
        TaskFamily::TwoFacts,
        TaskFamily::YesNo,
        TaskFamily::Counting,
        TaskFamily::Negation,
        TaskFamily::ListsSets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::OneFact => "one_fact",
            TaskFamily::TwoFacts => "two_facts",
            TaskFamily::YesNo => "yes_no",
            TaskFamily::Counting => "counting",
            TaskFamily::Negation => "negation",
            TaskFamily::ListsSets => "lists_sets",
        }
    }

    fn uses_objects(self) -> bool {
        matches!(self, TaskFamily::TwoFacts | TaskFamily::Counting | TaskFamily::ListsSets)
    }

    /// (min, max) statements per story used by [`TaskSpec::default_for`].
    pub fn default_lengths(self) -> (usize, usize) {
        match self {
            TaskFamily::OneFact | TaskFamily::YesNo | TaskFamily::Negation => (2, 6),
            TaskFamily::TwoFacts | TaskFamily::Counting | TaskFamily::ListsSets => (3, 8),
        }
    }

    fn min_statements(self) -> usize {
        match self {
            TaskFamily::TwoFacts => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskFamily {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| CorpusError::Config(format!("unknown task family {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub people: Vec<String>,
    pub locations: Vec<String>,
    pub objects: Vec<String>,
    pub min_statements: usize,
    pub max_statements: usize,
    pub seed: u64,
}

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl TaskSpec {
    pub fn default_for(family: TaskFamily, seed: u64) -> Self {
        let (min_statements, max_statements) = family.default_lengths();
        TaskSpec {
            family,
            people: owned(&["mary", "john", "daniel", "sandra"]),
            locations: owned(&["bathroom", "hallway", "kitchen", "garden", "office", "bedroom"]),
            objects: owned(&["football", "apple", "milk"]),
            min_statements,
            max_statements,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(CorpusError::Config(m));
        if self.people.is_empty() {
            return cfg("at least one person is required".into());
        }
        if self.locations.len() < 2 {
            return cfg("at least two locations are required".into());
        }
        if self.family.uses_objects() && self.objects.is_empty() {
            return cfg(format!("{} needs at least one object", self.family));
        }
        if self.objects.len() >= NUMBER_WORDS.len() && self.family == TaskFamily::Counting {
            return cfg(format!("counting supports at most {} objects", NUMBER_WORDS.len() - 1));
        }
        if self.min_statements < self.family.min_statements() || self.min_statements > self.max_statements {
            return cfg(format!(
                "story length bounds {}..={} are invalid for {}",
                self.min_statements, self.max_statements, self.family
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Place {
    Unplaced,
    At(usize),
    Held(usize),
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Move { person: usize },
    Grab { person: usize, object: usize },
    Drop { person: usize, object: usize },
    /// Positive or negative location claim about a person.
    Claim { person: usize, location: usize, negated: bool },
}

struct World<'a> {
    spec: &'a TaskSpec,
    located: Vec<Option<usize>>,
    objects: Vec<Place>,
    statements: Vec<Statement>,
    events: Vec<Event>,
}

impl<'a> World<'a> {
    fn new(spec: &'a TaskSpec) -> Self {
        World {
            spec,
            located: vec![None; spec.people.len()],
            objects: vec![Place::Unplaced; spec.objects.len()],
            statements: Vec::new(),
            events: Vec::new(),
        }
    }

    fn emit(&mut self, tokens: Vec<String>, event: Event) {
        let id = self.statements.len() as u32 + 1;
        self.statements.push(Statement { id, tokens });
        self.events.push(event);
    }

    fn person(&self, p: usize) -> String {
        self.spec.people[p].clone()
    }

    fn move_to(&mut self, rng: &mut ChaCha8Rng, p: usize, l: usize) {
        let verb = MOVE_VERBS.choose(rng).unwrap();
        let tokens = vec![self.person(p), verb.to_string(), "to".into(), "the".into(), self.spec.locations[l].clone()];
        self.located[p] = Some(l);
        self.emit(tokens, Event::Move { person: p });
    }

    fn grab(&mut self, rng: &mut ChaCha8Rng, p: usize, o: usize) {
        let verb = GRAB_VERBS.choose(rng).unwrap();
        let mut tokens = vec![self.person(p)];
        tokens.extend(verb.iter().map(|w| w.to_string()));
        tokens.extend(["the".to_string(), self.spec.objects[o].clone()]);
        self.objects[o] = Place::Held(p);
        self.emit(tokens, Event::Grab { person: p, object: o });
    }

    fn drop_object(&mut self, rng: &mut ChaCha8Rng, p: usize, o: usize) {
        let verb = DROP_VERBS.choose(rng).unwrap();
        let mut tokens = vec![self.person(p)];
        tokens.extend(verb.iter().map(|w| w.to_string()));
        tokens.extend(["the".to_string(), self.spec.objects[o].clone()]);
        self.objects[o] = match self.located[p] {
            Some(l) => Place::At(l),
            None => Place::Unplaced,
        };
        self.emit(tokens, Event::Drop { person: p, object: o });
    }

    fn claim(&mut self, rng: &mut ChaCha8Rng, p: usize, l: usize, negated: bool) {
        let mut tokens = vec![self.person(p), "is".into()];
        if negated {
            if rng.gen_bool(0.5) {
                tokens.extend(["no".to_string(), "longer".to_string()]);
            } else {
                tokens.push("not".into());
            }
            self.located[p] = None;
        } else {
            self.located[p] = Some(l);
        }
        tokens.extend(["in".to_string(), "the".to_string(), self.spec.locations[l].clone()]);
        self.emit(tokens, Event::Claim { person: p, location: l, negated });
    }

    fn grabbable(&self, p: usize) -> Vec<usize> {
        let Some(l) = self.located[p] else {
            return Vec::new();
        };
        (0..self.objects.len())
            .filter(|&o| matches!(self.objects[o], Place::Unplaced) || self.objects[o] == Place::At(l))
            .collect()
    }

    fn held_by(&self, p: usize) -> Vec<usize> {
        (0..self.objects.len()).filter(|&o| self.objects[o] == Place::Held(p)).collect()
    }

    /// One random valid action for the family.
    fn step(&mut self, rng: &mut ChaCha8Rng) {
        let spec = self.spec;
        let p = rng.gen_range(0..spec.people.len());
        let l = rng.gen_range(0..spec.locations.len());
        match spec.family {
            TaskFamily::OneFact | TaskFamily::YesNo => self.move_to(rng, p, l),
            TaskFamily::Negation => {
                let roll: f64 = rng.gen();
                if roll < 0.35 {
                    self.move_to(rng, p, l);
                } else if roll < 0.6 {
                    self.claim(rng, p, l, false);
                } else {
                    let target = match self.located[p] {
                        Some(cur) if rng.gen_bool(0.5) => cur,
                        _ => l,
                    };
                    self.claim(rng, p, target, true);
                }
            }
            TaskFamily::TwoFacts | TaskFamily::Counting | TaskFamily::ListsSets => {
                let grabbable = self.grabbable(p);
                let held = self.held_by(p);
                let roll: f64 = rng.gen();
                if roll < 0.4 || (grabbable.is_empty() && held.is_empty()) {
                    self.move_to(rng, p, l);
                } else if (roll < 0.75 && !grabbable.is_empty()) || held.is_empty() {
                    let o = *grabbable.choose(rng).unwrap();
                    self.grab(rng, p, o);
                } else {
                    let o = *held.choose(rng).unwrap();
                    self.drop_object(rng, p, o);
                }
            }
        }
    }

    fn last_event_id(&self, pred: impl Fn(&Event) -> bool) -> Option<u32> {
        self.events.iter().rposition(pred).map(|i| i as u32 + 1)
    }

    fn last_move(&self, p: usize) -> Option<u32> {
        self.last_event_id(|e| matches!(*e, Event::Move { person } if person == p))
    }

    /// Latest grab or drop by `p` for every object `p` ever handled.
    fn possession_support(&self, p: usize) -> Vec<u32> {
        let mut latest: BTreeMap<usize, u32> = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            match *e {
                Event::Grab { person, object } | Event::Drop { person, object } if person == p => {
                    latest.insert(object, i as u32 + 1);
                }
                _ => {}
            }
        }
        let mut ids: Vec<u32> = latest.into_values().collect();
        ids.sort_unstable();
        ids
    }

    /// Builds the question, or `None` when the story cannot support one.
    fn question(&self, rng: &mut ChaCha8Rng) -> Option<(Vec<String>, Vec<String>, Vec<u32>)> {
        let spec = self.spec;
        let words = |ws: &[&str]| owned(ws);
        match spec.family {
            TaskFamily::OneFact => {
                let p = *self.people_with(|p| self.last_move(p).is_some()).choose(rng)?;
                let id = self.last_move(p)?;
                let answer = spec.locations[self.located[p]?].clone();
                let mut q = words(&["where", "is"]);
                q.push(self.person(p));
                Some((q, vec![answer], vec![id]))
            }
            TaskFamily::YesNo => {
                let p = *self.people_with(|p| self.last_move(p).is_some()).choose(rng)?;
                let id = self.last_move(p)?;
                let here = self.located[p]?;
                let (asked, answer) = if rng.gen_bool(0.5) {
                    (here, "yes")
                } else {
                    let others: Vec<usize> = (0..spec.locations.len()).filter(|&l| l != here).collect();
                    (*others.choose(rng)?, "no")
                };
                let mut q = words(&["is"]);
                q.push(self.person(p));
                q.extend(words(&["in", "the"]));
                q.push(spec.locations[asked].clone());
                Some((q, vec![answer.to_string()], vec![id]))
            }
            TaskFamily::TwoFacts => {
                let held: Vec<(usize, usize)> = self
                    .objects
                    .iter()
                    .enumerate()
                    .filter_map(|(o, place)| match place {
                        Place::Held(p) => Some((o, *p)),
                        _ => None,
                    })
                    .collect();
                let &(o, p) = held.choose(rng)?;
                let grab = self.last_event_id(
                    |e| matches!(*e, Event::Grab { person, object } if person == p && object == o),
                )?;
                let moved = self.last_move(p)?;
                let answer = spec.locations[self.located[p]?].clone();
                let mut q = words(&["where", "is", "the"]);
                q.push(spec.objects[o].clone());
                Some((q, vec![answer], vec![grab, moved]))
            }
            TaskFamily::Counting | TaskFamily::ListsSets => {
                let handled = self.people_with(|p| {
                    self.events
                        .iter()
                        .any(|e| matches!(*e, Event::Grab { person, .. } if person == p))
                });
                let p = *handled.choose(rng)?;
                let held = self.held_by(p);
                let supports = self.possession_support(p);
                let (q, answers) = if spec.family == TaskFamily::Counting {
                    let mut q = words(&["how", "many", "objects", "is"]);
                    q.push(self.person(p));
                    q.push("carrying".into());
                    (q, vec![NUMBER_WORDS[held.len()].to_string()])
                } else {
                    let mut q = words(&["what", "is"]);
                    q.push(self.person(p));
                    q.push("carrying".into());
                    let mut names: Vec<String> = held.iter().map(|&o| spec.objects[o].clone()).collect();
                    names.sort();
                    if names.is_empty() {
                        names.push("nothing".into());
                    }
                    (q, names)
                };
                Some((q, answers, supports))
            }
            TaskFamily::Negation => {
                let last_claim = |p: usize| {
                    self.last_event_id(|e| match *e {
                        Event::Move { person } | Event::Claim { person, .. } => person == p,
                        _ => false,
                    })
                };
                let p = *self.people_with(|p| last_claim(p).is_some()).choose(rng)?;
                let id = last_claim(p)?;
                let (asked, answer) = match self.events[id as usize - 1] {
                    Event::Claim { location, negated: true, .. } => (location, "no"),
                    _ => {
                        let here = self.located[p]?;
                        if rng.gen_bool(0.5) {
                            (here, "yes")
                        } else {
                            let others: Vec<usize> =
                                (0..spec.locations.len()).filter(|&l| l != here).collect();
                            (*others.choose(rng)?, "no")
                        }
                    }
                };
                let mut q = words(&["is"]);
                q.push(self.person(p));
                q.extend(words(&["in", "the"]));
                q.push(spec.locations[asked].clone());
                Some((q, vec![answer.to_string()], vec![id]))
            }
        }
    }

    fn people_with(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.spec.people.len()).filter(|&p| pred(p)).collect()
    }
}

fn one_story(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Result<Story> {
    for _ in 0..MAX_ATTEMPTS {
        let len = rng.gen_range(spec.min_statements..=spec.max_statements);
        let mut world = World::new(spec);
        for _ in 0..len {
            world.step(rng);
        }
        if let Some((question, answers, supporting_ids)) = world.question(rng) {
            let story = Story {
                statements: world.statements,
                question,
                answers,
                supporting_ids,
            };
            debug_assert!(story.validate().is_ok());
            return Ok(story);
        }
    }
    Err(CorpusError::Config(format!(
        "could not generate a {} story in {MAX_ATTEMPTS} attempts",
        spec.family
    )))
}

/// Simulates `n_stories` stories. Identical specs give identical output.
pub fn generate_task(spec: &TaskSpec, n_stories: usize) -> Result<Vec<Story>> {
    if n_stories == 0 {
        return Err(CorpusError::Config("n_stories must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..n_stories).map(|_| one_story(spec, &mut rng)).collect()
}

/// Train and test stories with no test story repeating a training story. The
/// test stream uses a seed derived from `spec.seed`.
pub fn generate_split(spec: &TaskSpec, n_train: usize, n_test: usize) -> Result<(Vec<Story>, Vec<Story>)> {
    let train = generate_task(spec, n_train)?;
    if n_test == 0 {
        return Err(CorpusError::Config("n_test must be at least 1".into()));
    }
    let seen: HashSet<&Story> = train.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7e57_5eed_0000_0001);
    let mut test = Vec::with_capacity(n_test);
    let mut attempts = 0;
    while test.len() < n_test {
        attempts += 1;
        if attempts > MAX_ATTEMPTS * n_test.max(1) {
            return Err(CorpusError::Config(format!(
                "{} has too few distinct stories for a disjoint test split",
                spec.family
            )));
        }
        let story = one_story(spec, &mut rng)?;
        if !seen.contains(&story) {
            test.push(story);
        }
    }
    Ok((train, test))
}
