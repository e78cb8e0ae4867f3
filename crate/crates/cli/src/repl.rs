//! Line-oriented follow-up loop over one pair's refinement session.

use std::io::{BufRead, Write};

use planexplain_client::Client;
use planexplain_core::refine::{Explanation, RefinementSession};
use planexplain_core::Specificity;

use crate::CliError;

const HELP: &str = "type a request to refine the explanation; :history shows the session, :quit leaves";

fn show(out: &mut impl Write, e: &Explanation) -> std::io::Result<()> {
    writeln!(out, "[revision {}] {}", e.revision, e.text)
}

fn history(out: &mut impl Write, s: &RefinementSession) -> std::io::Result<()> {
    for (i, m) in s.messages.iter().enumerate() {
        let role = serde_json::to_value(m.role).ok();
        let role = role.as_ref().and_then(|r| r.as_str()).unwrap_or("?");
        writeln!(out, "{:>2} {role}: {}", i + 1, m.content)?;
    }
    Ok(())
}

/// Runs until `:quit` or end of input. Failed requests are reported inline
/// and leave the session as it was.
pub fn run(
    client: &Client,
    run_id: &str,
    pair: &str,
    level: Option<Specificity>,
    input: impl BufRead,
    mut out: impl Write,
    prompt: bool,
) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::data(e.to_string());
    let view = client.pair(run_id, pair, level)?;
    let level = view.level;
    let mut session = view.session.ok_or_else(|| {
        CliError::data(format!("`{pair}` has no explanation at level {level}; run `explain` first"))
    })?;
    if let Some(e) = session.latest() {
        show(&mut out, &e).map_err(io)?;
    }
    if prompt {
        eprintln!("{HELP}");
    }
    let mut lines = input.lines();
    loop {
        if prompt {
            eprint!("> ");
        }
        out.flush().map_err(io)?;
        let Some(line) = lines.next() else { break };
        let line = line.map_err(io)?;
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" | ":q" => break,
            ":history" => history(&mut out, &session).map_err(io)?,
            ":help" => writeln!(out, "{HELP}").map_err(io)?,
            cmd if cmd.starts_with(':') => writeln!(out, "unknown command `{cmd}`; {HELP}").map_err(io)?,
            request => match client.follow_up(run_id, pair, request, Some(level)) {
                Ok(resp) => {
                    session = resp.session;
                    show(&mut out, &resp.explanation).map_err(io)?;
                }
                Err(e) => eprintln!("error: {e}"),
            },
        }
    }
    out.flush().map_err(io)
}
