//! Match expressions selecting rule invocations and instructions by their
//! position in the rule-expansion stack: `g$three < h$two`, `*$input`,
//! `inner < ... < outer`.

use std::fmt;

use crate::error::{Error, Result};

/// Shell-style glob match supporting `*` and `?`.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    // reach[j]: pattern prefix so far matches text prefix of length j
    let mut reach = vec![false; t.len() + 1];
    reach[0] = true;
    for &pc in &p {
        let mut next = vec![false; t.len() + 1];
        if pc == '*' {
            let mut any = false;
            for j in 0..=t.len() {
                any |= reach[j];
                next[j] = any;
            }
        } else {
            for j in 0..t.len() {
                if reach[j] && (pc == '?' || pc == t[j]) {
                    next[j + 1] = true;
                }
            }
        }
        reach = next;
    }
    reach[t.len()]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelPattern {
    pub id_glob: String,
    pub tag_glob: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Level {
    Pattern(LevelPattern),
    Ellipsis,
}

/// Stack pattern, innermost level first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchExpr {
    pub levels: Vec<Level>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    RuleInvocation,
    Instruction,
}

/// One level of the expansion stack: a rule invocation (at most one tag) or
/// the instruction being walked (its tag set).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackFrame {
    pub kind: FrameKind,
    pub id: String,
    pub tags: Vec<String>,
}

impl StackFrame {
    pub fn rule(name: &str, tag: Option<&str>) -> Self {
        StackFrame {
            kind: FrameKind::RuleInvocation,
            id: name.to_string(),
            tags: tag.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn instruction<'a>(id: &str, tags: impl IntoIterator<Item = &'a String>) -> Self {
        StackFrame {
            kind: FrameKind::Instruction,
            id: id.to_string(),
            tags: tags.into_iter().cloned().collect(),
        }
    }
}

impl LevelPattern {
    pub fn matches(&self, frame: &StackFrame) -> bool {
        if !glob_match(&self.id_glob, &frame.id) {
            return false;
        }
        match &self.tag_glob {
            None => true,
            Some(t) if frame.tags.is_empty() => t == "*",
            Some(t) => frame.tags.iter().any(|tag| glob_match(t, tag)),
        }
    }
}

pub fn parse_match(text: &str) -> Result<MatchExpr> {
    let err = |msg: &str| Error::syntax(format!("match expression `{text}`: {msg}"), 0);
    let mut levels = Vec::new();
    for part in text.split('<') {
        let part = part.trim();
        if part.is_empty() {
            return Err(err("empty level"));
        }
        if part == "..." {
            if levels.last() == Some(&Level::Ellipsis) {
                return Err(err("adjacent `...`"));
            }
            levels.push(Level::Ellipsis);
            continue;
        }
        let (id, tag) = match part.split_once('$') {
            Some((id, tag)) => (id.trim(), Some(tag.trim())),
            None => (part, None),
        };
        let valid = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "_*?".contains(c));
        if !valid(id) || tag.is_some_and(|t| !valid(t)) {
            return Err(err(&format!("malformed level `{part}`")));
        }
        levels.push(Level::Pattern(LevelPattern {
            id_glob: id.to_string(),
            tag_glob: tag.map(str::to_string),
        }));
    }
    if !levels.iter().any(|l| matches!(l, Level::Pattern(_))) {
        return Err(err("needs at least one non-ellipsis level"));
    }
    Ok(MatchExpr { levels })
}

impl MatchExpr {
    /// Whether the pattern matches `stack` (innermost frame first), anchored
    /// at the innermost frame and open towards the outside.
    pub fn matches(&self, stack: &[StackFrame]) -> bool {
        !stack.is_empty() && match_from(&self.levels, stack)
    }

    /// Matches against the instruction frame alone.
    pub fn matches_instruction<'a>(&self, id: &str, tags: impl IntoIterator<Item = &'a String>) -> bool {
        self.matches(&[StackFrame::instruction(id, tags)])
    }
}

fn match_from(levels: &[Level], stack: &[StackFrame]) -> bool {
    match levels.split_first() {
        None => true,
        Some((Level::Ellipsis, rest)) => (0..=stack.len()).any(|skip| match_from(rest, &stack[skip..])),
        Some((Level::Pattern(p), rest)) => match stack.split_first() {
            Some((frame, outer)) => p.matches(frame) && match_from(rest, outer),
            None => false,
        },
    }
}

impl fmt::Display for MatchExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .levels
            .iter()
            .map(|l| match l {
                Level::Ellipsis => "...".to_string(),
                Level::Pattern(p) => match &p.tag_glob {
                    Some(t) => format!("{}${}", p.id_glob, t),
                    None => p.id_glob.clone(),
                },
            })
            .collect();
        f.write_str(&parts.join(" < "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn insn() -> StackFrame {
        StackFrame::instruction("insn_0", &[])
    }

    #[test]
    fn globbing() {
        assert!(glob_match("*", ""));
        assert!(glob_match("h*", "h_0"));
        assert!(glob_match("?_acc", "u_acc"));
        assert!(!glob_match("?_acc", "uu_acc"));
        assert!(glob_match("a*b*c", "aXbYbc"));
        assert!(!glob_match("a*b", "a"));
    }

    #[test]
    fn parse_forms() {
        let m = parse_match("g$three < h$two").unwrap();
        assert_eq!(m.levels.len(), 2);
        assert_eq!(m.to_string(), "g$three < h$two");
        let m = parse_match("*$input").unwrap();
        assert_eq!(
            m.levels,
            vec![Level::Pattern(LevelPattern {
                id_glob: "*".into(),
                tag_glob: Some("input".into())
            })]
        );
        let m = parse_match("inner < ... < outer").unwrap();
        assert_eq!(m.levels[1], Level::Ellipsis);
        for bad in ["", "< a", "a <", "a < < b", "...", "a < ... < ... < b", "a$"] {
            assert!(parse_match(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn stack_matching() {
        let m = parse_match("g$three < h$two").unwrap();
        let hit = [StackFrame::rule("g", Some("three")), StackFrame::rule("h", Some("two")), insn()];
        let miss = [StackFrame::rule("g", Some("three")), StackFrame::rule("h", Some("one")), insn()];
        assert!(m.matches(&hit));
        assert!(!m.matches(&miss));
        assert!(!m.matches(&hit[1..]));
        let tagged = parse_match("*$input").unwrap();
        let tags = vec!["input".to_string(), "other".to_string()];
        assert!(tagged.matches_instruction("f_line3_0", &tags));
        assert!(!tagged.matches_instruction("f_line3_0", &[]));
        let any_tag = parse_match("g$*").unwrap();
        assert!(any_tag.matches(&[StackFrame::rule("g", None), insn()]));
    }
}
