//! Terminal chat. Lines starting with `:` are commands: `:state`,
//! `:reset`, `:quit`.

use std::io::{BufRead, Write};

use bort_core::dialog::serialize_state;
use bort_core::inference::ChatSession;

use crate::serve::{load, Model};
use crate::{ChatArgs, CliResult, ServeArgs};

/// Runs the chat loop over `input`, writing to `out`.
pub fn repl<R: BufRead, W: Write>(model: &Model, input: R, mut out: W) -> std::io::Result<()> {
    let predictor = model.predictor();
    let mut session = ChatSession::new();
    writeln!(out, "{}", bort_core::inference::PROTOCOL_NOTE)?;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        match text {
            "" => continue,
            ":quit" | ":q" => break,
            ":reset" => {
                session = ChatSession::new();
                writeln!(out, "(new session)")?;
            }
            ":state" => {
                let tokens = serialize_state(&model.schema, &session.state).unwrap_or_default();
                writeln!(out, "state: {}", tokens.join(" "))?;
            }
            _ => {
                let turn = session.respond(&predictor, text);
                writeln!(out, "system: {}", turn.response_lex)?;
                writeln!(out, "  delex: {}", turn.response_delex)?;
                writeln!(out, "  db: {} matches={} bookable={}", turn.db.domain, turn.db.match_count, turn.db.bookable)?;
                for w in &turn.warnings {
                    writeln!(out, "  warning: {w}")?;
                }
            }
        }
        out.flush()?;
    }
    Ok(())
}

pub fn run(a: &ChatArgs) -> CliResult<()> {
    let serve = ServeArgs { checkpoint: a.checkpoint.clone(), schema: a.schema.clone(), db: a.db.clone(), port: 0, host: String::new(), static_dir: None };
    let model = load(&serve)?;
    let stdin = std::io::stdin();
    repl(&model, stdin.lock(), std::io::stdout().lock()).map_err(|e| crate::CliError::Runtime(e.into()))
}
