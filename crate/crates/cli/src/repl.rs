//! Text-mode session for terminals without the browser client.

use std::io::{BufRead, Write};

use nextpoi_core::agents::RouteOrigin;
use nextpoi_core::geo::TravelMode;
use nextpoi_core::PoiId;
use nextpoi_service::{EventBody, MessageRequest, SessionService};

pub const HELP: &str = "\
commands:
  recommend [poi]             rank candidates around POI (default: current location)
  ask <question>              ask about a place
  confirm <poi>               pick a POI from the pending list
  navigate [mode] [address]   route to the confirmed POI (mode: walk, drive, transit)
  show                        print the session record as JSON
  help | quit";

fn parse(line: &str) -> Result<Option<MessageRequest>, String> {
    let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim();
    Ok(Some(match cmd {
        "recommend" | "r" => MessageRequest::Recommend {
            location: (!rest.is_empty()).then(|| PoiId::new(rest)),
        },
        "ask" | "a" => MessageRequest::Question { text: rest.to_owned() },
        "confirm" | "c" => {
            if rest.is_empty() {
                return Err("confirm needs a POI id".into());
            }
            MessageRequest::Confirm { poi_id: PoiId::new(rest) }
        }
        "navigate" | "n" => {
            let (first, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let (mode, address) = match first.parse::<TravelMode>() {
                Ok(m) => (m, tail.trim()),
                Err(_) => (TravelMode::Walk, rest),
            };
            MessageRequest::Navigate {
                origin: (!address.is_empty()).then(|| RouteOrigin::Address(address.to_owned())),
                mode,
            }
        }
        _ => return Ok(None),
    }))
}

fn describe(body: &EventBody) -> String {
    match body {
        EventBody::Recommendation { items, list, refinements, .. } => {
            let mut s = format!("recommendations ({refinements} refinement(s)):\n");
            for i in items {
                s.push_str(&format!("  {:>2}. {}  {}  {:.0} m\n", i.rank, i.poi_id, i.category, i.distance_m));
            }
            if !list.explanation.is_empty() {
                s.push_str(&format!("why: {}", list.explanation));
            }
            s.trim_end().to_owned()
        }
        EventBody::Answer { text, .. } => text.clone(),
        EventBody::Confirmed { poi_id } => format!("confirmed {poi_id}"),
        EventBody::Navigation { route, asset_id, .. } => {
            let mut s = format!(
                "{:.0} m, about {:.0} min by {}\n",
                route.distance,
                route.duration / 60.0,
                route.mode
            );
            for step in &route.steps {
                s.push_str(&format!("  - {step}\n"));
            }
            s.push_str(&format!("map asset: {asset_id}"));
            s
        }
        EventBody::Error { agent, message } => format!("{agent} failed: {message}"),
        EventBody::Request { .. } => String::new(),
    }
}

/// Reads commands until `quit` or end of input.
pub fn run(service: &SessionService, session_id: &str, input: impl BufRead, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "session {session_id}; type `help` for commands")?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "quit" | "exit" | "q" => break,
            "help" | "?" => writeln!(out, "{HELP}")?,
            "show" => match service.get_session(session_id) {
                Ok(s) => writeln!(out, "{}", serde_json::to_string_pretty(&s).expect("serializable session"))?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
            _ => match parse(line) {
                Ok(Some(msg)) => match service.post_message(session_id, msg) {
                    Ok(event) => writeln!(out, "{}", describe(&event.body))?,
                    Err(e) => writeln!(out, "error: {e}")?,
                },
                Ok(None) => writeln!(out, "unknown command; type `help`")?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_parsing() {
        assert_eq!(parse("recommend").unwrap(), Some(MessageRequest::Recommend { location: None }));
        assert_eq!(
            parse("navigate drive FIXTURE_CITY_HALL").unwrap(),
            Some(MessageRequest::Navigate {
                origin: Some(RouteOrigin::Address("FIXTURE_CITY_HALL".into())),
                mode: TravelMode::Drive
            })
        );
        assert_eq!(
            parse("n").unwrap(),
            Some(MessageRequest::Navigate { origin: None, mode: TravelMode::Walk })
        );
        assert!(parse("confirm").is_err());
        assert_eq!(parse("dance").unwrap(), None);
    }
}
