//! Lexical style checks over a fixed rule subset.
//!
//! Implemented rules (codes follow the usual PEP 8 checker numbering):
//! - E501 line longer than 79 characters
//! - W291 trailing whitespace
//! - W293 whitespace-only blank line
//! - W191 tab in indentation
//! - E111 indentation not a multiple of four
//! - E302 fewer than 2 blank lines before a top-level definition
//! - E303 more than 2 blank lines before a top-level definition
//! - E231 missing whitespace after comma
//! - E225 missing whitespace around `=`, `==`, `<`, `>`, `+`, `-`
//!   (outside subscripts; `=` inside call/def parentheses is a keyword
//!   or default and is exempt; unary `+`/`-` are exempt)
//! - E702 multiple statements on one line via `;`
//!
//! Checks are lexical and run on unparseable code too. String interiors and
//! comments are masked before token rules apply; line-length and trailing
//! whitespace are physical checks that apply everywhere.

use serde::{Deserialize, Serialize};

const MAX_LINE_LENGTH: usize = 79;

/// One style violation occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_code: &'static str,
    /// 1-based line.
    pub line: usize,
    /// 1-based column (character offset).
    pub column: usize,
    pub message: String,
}

/// All violations of one piece of code; the violation count is its length.
pub type ViolationReport = Vec<Violation>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Code,
    StringBody,
    Comment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LexState {
    Normal,
    InString { quote: char, triple: bool },
}

struct ScannedLine {
    chars: Vec<char>,
    classes: Vec<CharClass>,
    /// Line begins inside a triple-quoted string.
    starts_in_string: bool,
    /// Line begins inside open brackets or after a backslash continuation.
    is_continuation: bool,
    /// Bracket depths per character position, sampled before the character.
    paren_depth: Vec<i32>,
    square_depth: Vec<i32>,
    brace_depth: Vec<i32>,
}

/// Classify every character of every line, tracking string and bracket state
/// across lines.
fn scan(code: &str) -> Vec<ScannedLine> {
    let mut lines = Vec::new();
    let mut state = LexState::Normal;
    let mut paren = 0i32;
    let mut square = 0i32;
    let mut brace = 0i32;
    let mut backslash_continuation = false;

    for raw_line in code.split('\n') {
        let chars: Vec<char> = raw_line.chars().collect();
        let starts_in_string = matches!(state, LexState::InString { .. });
        let is_continuation =
            !starts_in_string && (paren + square + brace > 0 || backslash_continuation);
        backslash_continuation = false;

        let mut classes = vec![CharClass::Code; chars.len()];
        let mut paren_depth = vec![0i32; chars.len()];
        let mut square_depth = vec![0i32; chars.len()];
        let mut brace_depth = vec![0i32; chars.len()];

        let mut i = 0;
        while i < chars.len() {
            paren_depth[i] = paren;
            square_depth[i] = square;
            brace_depth[i] = brace;
            let c = chars[i];
            match state {
                LexState::Normal => match c {
                    '#' => {
                        for class in classes.iter_mut().skip(i) {
                            *class = CharClass::Comment;
                        }
                        for j in i..chars.len() {
                            paren_depth[j] = paren;
                            square_depth[j] = square;
                            brace_depth[j] = brace;
                        }
                        i = chars.len();
                        continue;
                    }
                    '\'' | '"' => {
                        let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
                        classes[i] = CharClass::StringBody;
                        if triple {
                            classes[i + 1] = CharClass::StringBody;
                            classes[i + 2] = CharClass::StringBody;
                            paren_depth[i + 1] = paren;
                            square_depth[i + 1] = square;
                            brace_depth[i + 1] = brace;
                            paren_depth[i + 2] = paren;
                            square_depth[i + 2] = square;
                            brace_depth[i + 2] = brace;
                            i += 2;
                        }
                        state = LexState::InString { quote: c, triple };
                    }
                    '(' => paren += 1,
                    ')' => paren = (paren - 1).max(0),
                    '[' => square += 1,
                    ']' => square = (square - 1).max(0),
                    '{' => brace += 1,
                    '}' => brace = (brace - 1).max(0),
                    '\\' if i + 1 == chars.len() => backslash_continuation = true,
                    _ => {}
                },
                LexState::InString { quote, triple } => {
                    classes[i] = CharClass::StringBody;
                    if c == '\\' {
                        if i + 1 < chars.len() {
                            classes[i + 1] = CharClass::StringBody;
                            paren_depth[i + 1] = paren;
                            square_depth[i + 1] = square;
                            brace_depth[i + 1] = brace;
                            i += 1;
                        }
                    } else if c == quote {
                        if triple {
                            if i + 2 < chars.len() && chars[i + 1] == quote && chars[i + 2] == quote
                            {
                                classes[i + 1] = CharClass::StringBody;
                                classes[i + 2] = CharClass::StringBody;
                                paren_depth[i + 1] = paren;
                                square_depth[i + 1] = square;
                                brace_depth[i + 1] = brace;
                                paren_depth[i + 2] = paren;
                                square_depth[i + 2] = square;
                                brace_depth[i + 2] = brace;
                                i += 2;
                                state = LexState::Normal;
                            } else if i + 1 < chars.len()
                                && chars[i + 1] == quote
                                && i + 2 == chars.len()
                            {
                                // Two closing quotes at end of line stay open.
                                classes[i + 1] = CharClass::StringBody;
                                i += 1;
                            }
                        } else {
                            state = LexState::Normal;
                        }
                    }
                }
            }
            i += 1;
        }

        // Single-quoted strings do not survive a newline.
        if let LexState::InString { triple: false, .. } = state {
            state = LexState::Normal;
        }

        lines.push(ScannedLine {
            chars,
            classes,
            starts_in_string,
            is_continuation,
            paren_depth,
            square_depth,
            brace_depth,
        });
    }
    lines
}

/// Check code against the implemented rule subset. Entries are ordered by
/// (line, column, rule_code) so reports are deterministic.
pub fn style_check(code: &str) -> ViolationReport {
    let code = if code.contains('\r') {
        code.replace("\r\n", "\n").replace('\r', "\n")
    } else {
        code.to_string()
    };
    let scanned = scan(&code);
    let mut violations = Vec::new();

    for (idx, line) in scanned.iter().enumerate() {
        let line_no = idx + 1;
        check_physical(line, line_no, &mut violations);
        if !line.starts_in_string {
            check_indentation(line, line_no, &mut violations);
            check_tokens(line, line_no, &mut violations);
        }
    }
    check_blank_lines_around_defs(&scanned, &mut violations);

    violations.sort_by(|a, b| {
        (a.line, a.column, a.rule_code).cmp(&(b.line, b.column, b.rule_code))
    });
    violations
}

fn check_physical(line: &ScannedLine, line_no: usize, out: &mut Vec<Violation>) {
    let len = line.chars.len();
    if len > MAX_LINE_LENGTH {
        out.push(Violation {
            rule_code: "E501",
            line: line_no,
            column: MAX_LINE_LENGTH + 1,
            message: format!("line too long ({len} > {MAX_LINE_LENGTH} characters)"),
        });
    }
    if len > 0 && line.chars.iter().all(|c| c.is_whitespace()) {
        out.push(Violation {
            rule_code: "W293",
            line: line_no,
            column: 1,
            message: "whitespace on blank line".to_string(),
        });
    } else if let Some(last) = line.chars.last() {
        if last.is_whitespace() {
            let first_trailing = line
                .chars
                .iter()
                .rposition(|c| !c.is_whitespace())
                .map_or(0, |p| p + 1);
            out.push(Violation {
                rule_code: "W291",
                line: line_no,
                column: first_trailing + 1,
                message: "trailing whitespace".to_string(),
            });
        }
    }
}

fn indent_len(line: &ScannedLine) -> usize {
    line.chars
        .iter()
        .take_while(|c| **c == ' ' || **c == '\t')
        .count()
}

fn check_indentation(line: &ScannedLine, line_no: usize, out: &mut Vec<Violation>) {
    if line.is_continuation {
        return;
    }
    let indent = indent_len(line);
    if indent == line.chars.len() {
        return; // blank line
    }
    // Comment-only lines are exempt from indentation rules.
    if line.classes[indent] == CharClass::Comment {
        return;
    }
    if line.chars[..indent].contains(&'\t') {
        out.push(Violation {
            rule_code: "W191",
            line: line_no,
            column: 1,
            message: "indentation contains tabs".to_string(),
        });
    } else if !indent.is_multiple_of(4) {
        out.push(Violation {
            rule_code: "E111",
            line: line_no,
            column: indent + 1,
            message: "indentation is not a multiple of four".to_string(),
        });
    }
}

/// Operators subject to the surrounding-whitespace rule.
const SPACED_OPERATORS: [&str; 6] = ["==", "=", "<", ">", "+", "-"];

/// Multi-character operators lexed as units so their prefixes are not
/// mistaken for members of the spaced set.
const COMPOUND_OPERATORS: [&str; 22] = [
    "**=", "//=", ">>=", "<<=", "!=", "<=", ">=", "->", ":=", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "@=", "**", "//", "<<", ">>",
];

const UNARY_CONTEXT_KEYWORDS: [&str; 16] = [
    "return", "and", "or", "not", "in", "is", "if", "else", "elif", "while", "assert", "yield",
    "lambda", "await", "raise", "from",
];

fn check_tokens(line: &ScannedLine, line_no: usize, out: &mut Vec<Violation>) {
    let chars = &line.chars;
    let n = chars.len();
    let is_code = |i: usize| i < n && line.classes[i] == CharClass::Code;

    let mut i = 0;
    while i < n {
        if !is_code(i) {
            i += 1;
            continue;
        }
        let c = chars[i];

        if c == ',' {
            if let Some(&next) = chars.get(i + 1) {
                let next_is_comment = line.classes[i + 1] == CharClass::Comment;
                if !next.is_whitespace()
                    && !matches!(next, ')' | ']' | '}')
                    && !next_is_comment
                {
                    out.push(Violation {
                        rule_code: "E231",
                        line: line_no,
                        column: i + 1,
                        message: "missing whitespace after ','".to_string(),
                    });
                }
            }
            i += 1;
            continue;
        }

        if c == ';' {
            let more_code = (i + 1..n).any(|j| is_code(j) && !chars[j].is_whitespace());
            if more_code {
                out.push(Violation {
                    rule_code: "E702",
                    line: line_no,
                    column: i + 1,
                    message: "multiple statements on one line (semicolon)".to_string(),
                });
            }
            i += 1;
            continue;
        }

        // Lex compound operators as units so they fall outside the spaced set.
        if let Some(op) = match_operator(chars, i, &COMPOUND_OPERATORS) {
            i += op.len();
            continue;
        }

        if let Some(op) = match_operator(chars, i, &SPACED_OPERATORS) {
            let op_len = op.chars().count();
            if should_check_spacing(line, i, op) {
                let before_ok = i == 0 || chars[i - 1].is_whitespace();
                let after = i + op_len;
                let after_ok = after >= n
                    || chars[after].is_whitespace()
                    || line.classes[after] == CharClass::Comment;
                if !(before_ok && after_ok) {
                    out.push(Violation {
                        rule_code: "E225",
                        line: line_no,
                        column: i + 1,
                        message: format!("missing whitespace around '{op}'"),
                    });
                }
            }
            i += op_len;
            continue;
        }

        i += 1;
    }
}

fn match_operator<'a>(chars: &[char], i: usize, table: &[&'a str]) -> Option<&'a str> {
    table.iter().copied().find(|op| {
        op.chars()
            .enumerate()
            .all(|(k, oc)| chars.get(i + k) == Some(&oc))
    })
}

fn should_check_spacing(line: &ScannedLine, i: usize, op: &str) -> bool {
    // Subscript and slice positions are exempt for the whole set.
    if line.square_depth[i] > 0 {
        return false;
    }
    // `=` inside parentheses or braces is a keyword argument or default.
    if op == "=" && (line.paren_depth[i] > 0 || line.brace_depth[i] > 0) {
        return false;
    }
    if op == "+" || op == "-" {
        return !is_unary_position(line, i);
    }
    true
}

/// A `+`/`-` is unary when nothing bindable precedes it: start of line, an
/// opening bracket, another operator, a separator, a keyword such as
/// `return`, or a numeric exponent (`1e-5`).
fn is_unary_position(line: &ScannedLine, i: usize) -> bool {
    let chars = &line.chars;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if line.classes[j] != CharClass::Code {
            // Preceded by a string literal: binary (e.g. "a" + "b").
            return false;
        }
        if chars[j].is_whitespace() {
            continue;
        }
        let prev = chars[j];
        if "=<>+-*/%,([{:;&|^~@!".contains(prev) {
            return true;
        }
        // Scientific-notation exponent sign.
        if (prev == 'e' || prev == 'E') && j > 0 {
            let before: String = chars[..j].iter().collect();
            if before
                .trim_end_matches(|c: char| c.is_ascii_digit() || c == '.' || c == '_')
                .len()
                < before.len()
                && chars[j - 1].is_ascii_digit()
            {
                return true;
            }
        }
        if prev.is_alphanumeric() || prev == '_' {
            let start = chars[..=j]
                .iter()
                .rposition(|c| !(c.is_alphanumeric() || *c == '_'))
                .map_or(0, |p| p + 1);
            let word: String = chars[start..=j].iter().collect();
            return UNARY_CONTEXT_KEYWORDS.contains(&word.as_str());
        }
        return false;
    }
    true
}

fn check_blank_lines_around_defs(lines: &[ScannedLine], out: &mut Vec<Violation>) {
    let is_blank = |idx: usize| {
        lines[idx].chars.is_empty() || lines[idx].chars.iter().all(|c| c.is_whitespace())
    };
    let is_comment_only = |idx: usize| {
        let line = &lines[idx];
        !line.starts_in_string
            && line
                .classes
                .iter()
                .zip(&line.chars)
                .all(|(class, c)| c.is_whitespace() || *class == CharClass::Comment)
            && line.classes.contains(&CharClass::Comment)
    };
    let is_decorator = |idx: usize| {
        let line = &lines[idx];
        !line.starts_in_string && !line.is_continuation && line.chars.first() == Some(&'@')
    };
    let is_top_level_def = |idx: usize| {
        let line = &lines[idx];
        if line.starts_in_string || line.is_continuation {
            return false;
        }
        let text: String = line.chars.iter().collect();
        text.starts_with("def ") || text.starts_with("class ") || text.starts_with("async def ")
    };

    for idx in 0..lines.len() {
        if !is_top_level_def(idx) {
            continue;
        }
        // The requirement applies above the definition's decorators and any
        // attached comment block.
        let mut top = idx;
        while top > 0 && (is_comment_only(top - 1) || is_decorator(top - 1)) {
            top -= 1;
        }
        if is_decorator(top) && top != idx {
            // Decorated def: blanks between decorator and def are out of scope.
        }
        let mut blanks = 0;
        let mut p = top;
        while p > 0 && is_blank(p - 1) {
            blanks += 1;
            p -= 1;
        }
        if p == 0 {
            continue; // first code in the file
        }
        if blanks < 2 {
            out.push(Violation {
                rule_code: "E302",
                line: idx + 1,
                column: 1,
                message: format!("expected 2 blank lines, found {blanks}"),
            });
        } else if blanks > 2 {
            out.push(Violation {
                rule_code: "E303",
                line: idx + 1,
                column: 1,
                message: format!("too many blank lines ({blanks})"),
            });
        }
    }
}
