//! Bundled benchmark programs and the outcomes each one is expected to show.

use crate::fuzz::OutcomeClass;

pub struct CorpusProgram {
    pub name: &'static str,
    pub source: &'static str,
}

pub const PROGRAMS: &[CorpusProgram] = &[
    CorpusProgram { name: "moby28462.csp", source: include_str!("../corpus/moby28462.csp") },
    CorpusProgram { name: "primesieve.csp", source: include_str!("../corpus/primesieve.csp") },
    CorpusProgram { name: "double_lock.csp", source: include_str!("../corpus/double_lock.csp") },
    CorpusProgram { name: "send_no_receiver.csp", source: include_str!("../corpus/send_no_receiver.csp") },
    CorpusProgram { name: "wg_missing_done.csp", source: include_str!("../corpus/wg_missing_done.csp") },
    CorpusProgram { name: "select_race.csp", source: include_str!("../corpus/select_race.csp") },
];

/// Looks a program up by file name, with or without `.csp`.
pub fn get(name: &str) -> Option<&'static CorpusProgram> {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    PROGRAMS.iter().find(|p| p.name == base || p.name.strip_suffix(".csp") == Some(base))
}

/// One `// expect: arg0=N baseline=CLASS fuzz=CLASS` header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expectation {
    pub arg0: i64,
    pub baseline: OutcomeClass,
    pub fuzz: OutcomeClass,
}

pub fn expectations(source: &str) -> Result<Vec<Expectation>, String> {
    let mut out = Vec::new();
    for line in source.lines() {
        let Some(rest) = line.trim().strip_prefix("// expect:") else { continue };
        let (mut arg0, mut baseline, mut fuzz) = (None, None, None);
        for field in rest.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| format!("bad expect field `{field}`"))?;
            match k {
                "arg0" => arg0 = Some(v.parse::<i64>().map_err(|e| format!("arg0: {e}"))?),
                "baseline" => baseline = Some(v.parse::<OutcomeClass>()?),
                "fuzz" => fuzz = Some(v.parse::<OutcomeClass>()?),
                _ => return Err(format!("unknown expect key `{k}`")),
            }
        }
        match (arg0, baseline, fuzz) {
            (Some(arg0), Some(baseline), Some(fuzz)) => out.push(Expectation { arg0, baseline, fuzz }),
            _ => return Err(format!("incomplete expect line `{}`", line.trim())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::check;

    #[test]
    fn every_program_validates_and_declares_expectations() {
        for p in PROGRAMS {
            check(p.source, p.name).unwrap_or_else(|d| panic!("{}: {d:?}", p.name));
            assert!(!expectations(p.source).unwrap().is_empty(), "{}", p.name);
        }
        assert_eq!(expectations(get("send_no_receiver").unwrap().source).unwrap().len(), 2);
    }

    #[test]
    fn lookup() {
        assert_eq!(get("primesieve").unwrap().name, "primesieve.csp");
        assert_eq!(get("some/dir/double_lock.csp").unwrap().name, "double_lock.csp");
        assert!(get("nope").is_none());
    }

    #[test]
    fn malformed_expect_lines() {
        assert!(expectations("// expect: arg0=1 baseline=CLEAN").is_err());
        assert!(expectations("// expect: arg0=1 baseline=OOPS fuzz=LEAK").is_err());
        assert_eq!(expectations("// nothing here").unwrap(), vec![]);
    }
}
