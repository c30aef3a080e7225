use std::fmt::Write as _;

use super::{CorpusError, Result, Statement, Story};

/// Lowercases, splits on whitespace and drops trailing `.` and `?`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.trim()
        .trim_end_matches(['.', '?'])
        .split_whitespace()
        .map(|w| w.trim_end_matches(['.', '?']).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Parses bAbI text: `ID words.` statement lines and
/// `ID words?<TAB>answers<TAB>supporting IDs` question lines. An ID of 1
/// starts a new story. Each question yields one [`Story`] holding the
/// statements seen so far.
pub fn parse_babi(text: &str) -> Result<Vec<Story>> {
    let mut stories = Vec::new();
    let mut visible: Vec<Statement> = Vec::new();
    let mut last_id = 0u32;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: &str| CorpusError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let (id_text, rest) = line
            .trim_start()
            .split_once(' ')
            .ok_or_else(|| parse_err("expected `ID text`"))?;
        let id: u32 = id_text
            .parse()
            .map_err(|_| parse_err(&format!("invalid line ID {id_text:?}")))?;
        if id == 0 {
            return Err(parse_err("line IDs start at 1"));
        }
        if id == 1 {
            visible.clear();
        } else if id <= last_id {
            return Err(parse_err(&format!("line ID {id} does not follow {last_id}")));
        }
        last_id = id;

        if rest.contains('\t') {
            let fields: Vec<&str> = rest.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err("question lines need text, answers and supporting IDs"));
            }
            let question = tokenize(fields[0]);
            if question.is_empty() {
                return Err(parse_err("empty question"));
            }
            let answers: Vec<String> = fields[1]
                .split(',')
                .map(|a| a.trim().to_lowercase())
                .filter(|a| !a.is_empty())
                .collect();
            if answers.is_empty() {
                return Err(parse_err("missing answer"));
            }
            let mut supporting_ids = Vec::new();
            for s in fields[2].split_whitespace() {
                let sid: u32 = s
                    .parse()
                    .map_err(|_| parse_err(&format!("invalid supporting ID {s:?}")))?;
                supporting_ids.push(sid);
            }
            let story = Story {
                statements: visible.clone(),
                question,
                answers,
                supporting_ids,
            };
            story.validate().map_err(|msg| CorpusError::Validation { line: line_no, msg })?;
            stories.push(story);
        } else {
            let tokens = tokenize(rest);
            if tokens.is_empty() {
                return Err(parse_err("empty statement"));
            }
            visible.push(Statement { id, tokens });
        }
    }
    Ok(stories)
}

fn sentence(tokens: &[String], end: char, capitalize: bool) -> String {
    let mut s = tokens.join(" ");
    if capitalize {
        if let Some(first) = s.get(..1) {
            let upper = first.to_uppercase();
            s.replace_range(..1, &upper);
        }
    }
    s.push(end);
    s
}

/// Renders stories in bAbI layout, one question per story. The question takes
/// the ID following the last statement.
pub fn format_babi(stories: &[Story], capitalize: bool) -> String {
    let mut out = String::new();
    for story in stories {
        for st in &story.statements {
            let _ = writeln!(out, "{} {}", st.id, sentence(&st.tokens, '.', capitalize));
        }
        let qid = story.statements.last().map_or(1, |s| s.id + 1);
        let supports: Vec<String> = story.supporting_ids.iter().map(u32::to_string).collect();
        let _ = writeln!(
            out,
            "{} {}\t{}\t{}",
            qid,
            sentence(&story.question, '?', capitalize),
            story.answers.join(","),
            supports.join(" ")
        );
    }
    out
}
