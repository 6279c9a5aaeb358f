use std::sync::Arc;

use super::ast::SourceLoc;
use super::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Kw(Keyword),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Assign,
    DotDot,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

macro_rules! keywords {
    ($($variant:ident => $text:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum Keyword { $($variant),* }

        impl Keyword {
            pub fn from_str(s: &str) -> Option<Keyword> {
                match s {
                    $($text => Some(Keyword::$variant),)*
                    _ => None,
                }
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Keyword::$variant => $text),*
                }
            }
        }
    };
}

keywords! {
    Func => "func",
    Var => "var",
    Make => "make",
    Chan => "chan",
    Mutex => "mutex",
    Wg => "wg",
    Cond => "cond",
    Int => "int",
    Go => "go",
    Send => "send",
    Recv => "recv",
    Close => "close",
    Lock => "lock",
    Unlock => "unlock",
    Add => "add",
    Done => "done",
    Wait => "wait",
    Cwait => "cwait",
    Signal => "signal",
    Broadcast => "broadcast",
    Select => "select",
    Case => "case",
    Default => "default",
    If => "if",
    Else => "else",
    For => "for",
    In => "in",
    Loop => "loop",
    Yield => "yield",
    Return => "return",
    Skip => "skip",
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Kw(k) => format!("`{}`", k.as_str()),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::DotDot => "..",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bang => "!",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub loc: SourceLoc,
}

/// Splits `text` into tokens. The final token is always `Eof`.
pub fn tokenize(text: &str, file: &Arc<str>) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let loc = |line, col| SourceLoc::new(file.clone(), line, col);

    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let begin = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
                col += 1;
            }
            let word: String = chars[begin..i].iter().collect();
            let tok = match Keyword::from_str(&word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word),
            };
            out.push(Token { tok, loc: loc(start.0, start.1) });
            continue;
        }
        if c.is_ascii_digit() {
            let begin = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
                col += 1;
            }
            let digits: String = chars[begin..i].iter().collect();
            let value = digits.parse::<i64>().map_err(|_| {
                Diagnostic::new(loc(start.0, start.1), format!("integer literal `{digits}` out of range"))
            })?;
            out.push(Token { tok: Tok::Int(value), loc: loc(start.0, start.1) });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('.', Some('.')) => (Tok::DotDot, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('&', Some('&')) => (Tok::AndAnd, 2),
            ('|', Some('|')) => (Tok::OrOr, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            (',', _) => (Tok::Comma, 1),
            (':', _) => (Tok::Colon, 1),
            ('=', _) => (Tok::Assign, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('%', _) => (Tok::Percent, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('!', _) => (Tok::Bang, 1),
            _ => {
                return Err(Diagnostic::new(
                    loc(start.0, start.1),
                    format!("unexpected character `{}`", c.escape_default()),
                ))
            }
        };
        i += width;
        col += width as u32;
        out.push(Token { tok, loc: loc(start.0, start.1) });
    }
    out.push(Token { tok: Tok::Eof, loc: eof_loc(text, file) });
    Ok(out)
}

/// Location just past the last character of the last line.
pub fn eof_loc(text: &str, file: &Arc<str>) -> SourceLoc {
    let line = text.split('\n').count().max(1) as u32;
    let last = text.rsplit('\n').next().unwrap_or("");
    SourceLoc::new(file.clone(), line, last.chars().count() as u32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, &Arc::from("t.csp")).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn comments_and_operators() {
        assert_eq!(
            toks("a<=b // c\n..!="),
            vec![
                Tok::Ident("a".into()),
                Tok::Le,
                Tok::Ident("b".into()),
                Tok::DotDot,
                Tok::NotEq,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn locations_are_one_based() {
        let t = tokenize("func\n  main", &Arc::from("f")).unwrap();
        assert_eq!((t[0].loc.line, t[0].loc.col), (1, 1));
        assert_eq!((t[1].loc.line, t[1].loc.col), (2, 3));
        assert_eq!((t[2].loc.line, t[2].loc.col), (2, 7));
    }

    #[test]
    fn bad_character_is_a_diagnostic() {
        let err = tokenize("func main() { $ }", &Arc::from("f")).unwrap_err();
        assert_eq!((err.loc.line, err.loc.col), (1, 15));
    }

    #[test]
    fn oversized_literal() {
        assert!(tokenize("99999999999999999999", &Arc::from("f")).is_err());
    }
}
