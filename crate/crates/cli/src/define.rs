//! Terminal fallback for the topic-definition loop: judge suggested words,
//! then judge boundary documents until the topic calibrates.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use anyhow::{bail, Result};

use rolesearch_core::engine::Engine;
use rolesearch_core::topics::{BoundaryJudgment, TopicError};
use rolesearch_core::Error;

pub struct Options {
    pub suggestions: usize,
    pub rounds: usize,
    pub band: usize,
}

enum Answer {
    Yes,
    No,
    Skip,
    Done,
}

fn ask(input: &mut impl BufRead, out: &mut impl Write, text: &str) -> Result<Answer> {
    write!(out, "{text}")?;
    out.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        writeln!(out)?;
        return Ok(Answer::Done);
    }
    Ok(match line.trim().to_lowercase().as_str() {
        "y" | "yes" => Answer::Yes,
        "n" | "no" => Answer::No,
        "d" | "done" | "q" => Answer::Done,
        _ => Answer::Skip,
    })
}

fn snippet(text: &str, n: usize) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(n) {
        Some((i, _)) => format!("{}...", &flat[..i]),
        None => flat,
    }
}

pub fn run(engine: &Engine, name: &str, seeds: &[String], opts: Options, input: &mut impl BufRead, out: &mut impl Write) -> Result<()> {
    let topic = engine.create_topic(name, seeds, None)?.item;
    let id = topic.topic_id.clone();
    writeln!(out, "created topic {id} {name:?} from {}", topic.seed_words.join(", "))?;

    writeln!(out, "suggested words: y accept, n reject, Enter skip, d done")?;
    let mut done = false;
    for _ in 0..opts.rounds {
        let suggestions = engine.suggestions(&id, opts.suggestions)?;
        if suggestions.is_empty() || done {
            break;
        }
        let (mut accept, mut reject) = (Vec::new(), Vec::new());
        for s in suggestions {
            match ask(input, out, &format!("  {} ({:.3})? ", s.word, s.distance))? {
                Answer::Yes => accept.push(s.word),
                Answer::No => reject.push(s.word),
                Answer::Skip => {}
                Answer::Done => {
                    done = true;
                    break;
                }
            }
        }
        if accept.is_empty() && reject.is_empty() {
            break;
        }
        let t = engine.judge_words(&id, &accept, &reject, None)?.item;
        writeln!(out, "accepted: {}", t.accepted_words.join(", "))?;
    }

    writeln!(out, "boundary documents, relevant to {name:?}? y, n, Enter skip, d done")?;
    let mut judgments = Vec::new();
    let mut seen = HashSet::new();
    loop {
        let fresh: Vec<_> = engine
            .boundary(&id, seen.len() + opts.band)?
            .into_iter()
            .filter(|d| !seen.contains(&d.doc_id))
            .collect();
        if fresh.is_empty() {
            bail!("no documents left to judge and the topic is not calibrated");
        }
        let mut stop = false;
        for d in fresh {
            seen.insert(d.doc_id.clone());
            let body = engine.document(&d.doc_id)?.body;
            writeln!(out, "  [{}] {}\n      {}", d.doc_id, d.title, snippet(&body, 160))?;
            match ask(input, out, "    relevant? ")? {
                Answer::Yes => judgments.push(BoundaryJudgment { doc_id: d.doc_id, relevant: true }),
                Answer::No => judgments.push(BoundaryJudgment { doc_id: d.doc_id, relevant: false }),
                Answer::Skip => {}
                Answer::Done => {
                    stop = true;
                    break;
                }
            }
        }
        match engine.calibrate(&id, &judgments, None) {
            Ok(t) => {
                let t = t.item;
                writeln!(out, "calibrated {id}: correction {:.4} from {} judgments", t.correction, t.boundary_judgments.len())?;
                break;
            }
            Err(e @ Error::Topic(TopicError::OneClassJudgments | TopicError::InvertedJudgments { .. })) if !stop => {
                writeln!(out, "{e}; showing more documents")?;
            }
            Err(e) => return Err(e.into()),
        }
    }

    writeln!(out, "closest documents:")?;
    for d in engine.topic_ranking(&id, 10)? {
        writeln!(out, "  {}\t{:.4}\t{}", d.doc_id, d.corrected_distance, d.title)?;
    }
    Ok(())
}
