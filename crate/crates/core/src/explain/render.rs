use std::fmt::Write;
use std::str::FromStr;

use super::annotate::AttentionAnnotation;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Ansi,
    Html,
    Structured,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ansi" => Ok(Format::Ansi),
            "html" => Ok(Format::Html),
            "structured" => Ok(Format::Structured),
            other => Err(Error::Usage(format!(
                "unknown format {other:?} (expected ansi, html or structured)"
            ))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Ansi => "txt",
            Format::Html => "html",
            Format::Structured => "json",
        }
    }
}

/// 256-colour backgrounds from faint to strong.
const ANSI_BACKGROUNDS: [u8; 5] = [255, 230, 222, 214, 208];
const HTML_ALPHA: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.85];

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn check(a: &AttentionAnnotation) -> Result<()> {
    if a.tokens.is_empty() || a.tokens.len() != a.weights.len() || a.tokens.len() != a.levels.len() {
        return Err(Error::Contract("annotation tokens, weights and levels differ in length".into()));
    }
    Ok(())
}

fn ansi(a: &AttentionAnnotation) -> String {
    let mut out = format!("[{}] {} ({})\n", a.verdict, a.claim, a.article_source);
    let spans: Vec<String> = a
        .tokens
        .iter()
        .zip(&a.levels)
        .map(|(t, &l)| {
            let bg = ANSI_BACKGROUNDS[(l as usize).min(ANSI_BACKGROUNDS.len() - 1)];
            format!("\x1b[48;5;{bg}m\x1b[38;5;16m{t}\x1b[0m")
        })
        .collect();
    out.push_str(&spans.join(" "));
    out.push('\n');
    out
}

fn html_snippet(a: &AttentionAnnotation) -> String {
    let mut out = String::from("<p class=\"snippet\">");
    for (i, ((t, w), &l)) in a.tokens.iter().zip(&a.weights).zip(&a.levels).enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let alpha = HTML_ALPHA[(l as usize).min(HTML_ALPHA.len() - 1)];
        let _ = write!(
            out,
            "<span class=\"shade{l}\" style=\"background-color: rgba(255, 140, 0, {alpha})\" title=\"{w}\">{}</span>",
            escape_html(t)
        );
    }
    out.push_str("</p>");
    out
}

/// Renders one annotation.
pub fn render(annotation: &AttentionAnnotation, format: Format) -> Result<String> {
    check(annotation)?;
    Ok(match format {
        Format::Ansi => ansi(annotation),
        Format::Html => format!(
            "<div class=\"annotation\"><h3>{} &mdash; {}</h3>{}</div>\n",
            escape_html(&annotation.article_source),
            escape_html(&annotation.verdict),
            html_snippet(annotation)
        ),
        Format::Structured => {
            serde_json::to_string_pretty(annotation).map_err(|e| Error::Format(e.to_string()))? + "\n"
        }
    })
}

/// Renders every annotation of one claim as a single document.
pub fn render_claim(
    claim_id: &str,
    claim: &str,
    verdict: &str,
    annotations: &[AttentionAnnotation],
    format: Format,
) -> Result<String> {
    annotations.iter().try_for_each(check)?;
    Ok(match format {
        Format::Ansi => {
            let mut out = format!("claim {claim_id}: {claim}\nverdict: {verdict}\n\n");
            for a in annotations {
                out.push_str(&ansi(a));
                out.push('\n');
            }
            out
        }
        Format::Html => {
            let mut out = format!(
                "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title></head><body>\n<h1>{}</h1>\n<h2>Verdict: {}</h2>\n",
                escape_html(claim_id),
                escape_html(claim),
                escape_html(verdict)
            );
            for a in annotations {
                let _ = writeln!(
                    out,
                    "<div class=\"annotation\"><h3>{}</h3>{}</div>",
                    escape_html(&a.article_source),
                    html_snippet(a)
                );
            }
            out.push_str("</body></html>\n");
            out
        }
        Format::Structured => {
            let doc = serde_json::json!({
                "claim_id": claim_id,
                "claim": claim,
                "verdict": verdict,
                "annotations": annotations,
            });
            serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))? + "\n"
        }
    })
}

/// Parses the structured rendering of a single annotation.
pub fn parse_structured(text: &str) -> Result<AttentionAnnotation> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::annotate::shade_levels;

    fn sample(tokens: &[&str], weights: &[f64]) -> AttentionAnnotation {
        AttentionAnnotation {
            claim_id: "c1".into(),
            claim: "x".into(),
            article_source: "site.com".into(),
            verdict: "credible".into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            weights: weights.to_vec(),
            levels: shade_levels(weights),
        }
    }

    #[test]
    fn html_escapes_markup() {
        let out = render(&sample(&["<b>", "bold"], &[0.4, 0.6]), Format::Html).unwrap();
        assert!(out.contains("&lt;b&gt;"));
        assert!(!out.contains("<b>"));
    }

    #[test]
    fn structured_round_trips() {
        let a = sample(&["a", "b", "c"], &[0.1 + 0.2, 0.3 - 1e-17, 0.4]);
        let back = parse_structured(&render(&a, Format::Structured).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn single_token_one_span() {
        let out = render(&sample(&["only"], &[1.0]), Format::Html).unwrap();
        assert_eq!(out.matches("<span").count(), 1);
        assert!(out.contains("shade4"));
    }

    #[test]
    fn unknown_format_is_usage_error() {
        assert!(matches!("pdf".parse::<Format>(), Err(Error::Usage(_))));
    }
}
