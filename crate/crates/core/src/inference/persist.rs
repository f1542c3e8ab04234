//! Text format for fitted parameters.
//!
//! ```text
//! #gubm-params v1
//! #model    gubm
//! #policy    zshape
//! #truncation    100
//! #default    5.00000000e-1
//! A    <query>    <image>    <value>
//! G    <i>    <m>    <n>    <value>
//! ```
//!
//! Header lines carry `#key<TAB>value`. Parameter lines are sorted (all `A`
//! lines by query then image, followed by the examination lines by key) and
//! values are written with nine significant digits, so that reading a file
//! and writing it again reproduces it byte for byte. The list baseline
//! writes `GU<TAB><rank><TAB><distance><TAB><value>` lines instead of `G`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::baselines::UbmParameters;
use crate::error::{Error, Result};
use crate::inference::{check_prob, GammaKey, ParameterStore};
use crate::path::DirectionPolicy;

pub const MAGIC: &str = "#gubm-params v1";

/// Formats a probability with nine significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// Parameters of any model this crate can fit, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Gubm(ParameterStore),
    Ubm(UbmParameters),
    /// Ground-truth relevance written by the simulator.
    Truth(TruthParams),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruthParams {
    pub alpha: BTreeMap<(String, String), f64>,
    /// Free-form description of the generating process.
    pub meta: Vec<(String, String)>,
}

impl ModelParams {
    pub fn model_name(&self) -> &'static str {
        match self {
            ModelParams::Gubm(_) => "gubm",
            ModelParams::Ubm(_) => "ubm",
            ModelParams::Truth(_) => "truth",
        }
    }

    /// Relevance estimate for ranking.
    pub fn alpha(&self, query: &str, image: &str) -> f64 {
        match self {
            ModelParams::Gubm(p) => p.alpha(query, image),
            ModelParams::Ubm(p) => p.alpha(query, image),
            ModelParams::Truth(t) => t
                .alpha
                .get(&(query.to_owned(), image.to_owned()))
                .copied()
                .unwrap_or(0.5),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let header = |out: &mut String, k: &str, v: &str| {
            let _ = writeln!(out, "#{k}\t{v}");
        };
        header(&mut out, "model", self.model_name());
        let alpha_line = |out: &mut String, q: &str, u: &str, v: f64| {
            let _ = writeln!(out, "A\t{q}\t{u}\t{}", format_value(v));
        };
        match self {
            ModelParams::Gubm(p) => {
                header(&mut out, "policy", p.policy().name());
                header(&mut out, "truncation", &p.truncation().to_string());
                header(&mut out, "default", &format_value(p.default_value()));
                for (q, u, v) in p.alphas() {
                    alpha_line(&mut out, q, u, v);
                }
                for (k, v) in p.gammas() {
                    let _ = writeln!(out, "G\t{}\t{}\t{}\t{}", k.i, k.m, k.n, format_value(v));
                }
            }
            ModelParams::Ubm(p) => {
                header(&mut out, "policy", p.policy().name());
                header(&mut out, "truncation", &p.truncation().to_string());
                header(&mut out, "default", &format_value(p.default_value()));
                for (q, u, v) in p.alphas() {
                    alpha_line(&mut out, q, u, v);
                }
                for ((r, d), v) in p.gammas() {
                    let _ = writeln!(out, "GU\t{r}\t{d}\t{}", format_value(v));
                }
            }
            ModelParams::Truth(t) => {
                for (k, v) in &t.meta {
                    header(&mut out, k, v);
                }
                for ((q, u), &v) in &t.alpha {
                    alpha_line(&mut out, q, u, v);
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let first = match lines.next() {
            Some((_, line)) => line?,
            None => String::new(),
        };
        if first != MAGIC {
            return Err(Error::parse(1, format!("expected {MAGIC:?} header")));
        }
        let mut meta: Vec<(String, String)> = Vec::new();
        let mut alpha = BTreeMap::new();
        let mut gamma: Vec<(GammaKey, f64)> = Vec::new();
        let mut gamma_ubm: Vec<((u32, u32), f64)> = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if let Some(key) = fields[0].strip_prefix('#') {
                if fields.len() != 2 {
                    return Err(Error::parse(lineno, "header needs key and value"));
                }
                meta.push((key.to_owned(), fields[1].to_owned()));
                continue;
            }
            let value = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad value {s:?}")))?;
                check_prob(v).map_err(|e| Error::parse(lineno, e.to_string()))?;
                Ok(v)
            };
            let index = |s: &str| -> Result<u32> {
                s.parse()
                    .map_err(|_| Error::parse(lineno, format!("bad index {s:?}")))
            };
            match (fields[0], fields.len()) {
                ("A", 4) => {
                    alpha.insert((fields[1].to_owned(), fields[2].to_owned()), value(fields[3])?);
                }
                ("G", 5) => {
                    let key = GammaKey {
                        i: index(fields[1])?,
                        m: index(fields[2])?,
                        n: index(fields[3])?,
                    };
                    if !key.on_path() {
                        return Err(Error::parse(lineno, "examination key off its path"));
                    }
                    gamma.push((key, value(fields[4])?));
                }
                ("GU", 4) => {
                    gamma_ubm.push(((index(fields[1])?, index(fields[2])?), value(fields[3])?));
                }
                _ => return Err(Error::parse(lineno, format!("unrecognised line {line:?}"))),
            }
        }

        let get = |key: &str| -> Result<&str> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::parse(1, format!("missing #{key} header")))
        };
        let policy = || -> Result<DirectionPolicy> { get("policy")?.parse() };
        let truncation = || -> Result<usize> {
            get("truncation")?
                .parse()
                .map_err(|_| Error::parse(1, "bad truncation"))
        };
        let default = || -> Result<f64> {
            get("default")?
                .parse()
                .map_err(|_| Error::parse(1, "bad default"))
        };
        match get("model")? {
            "gubm" => {
                let mut store = ParameterStore::new(policy()?, truncation()?, default()?);
                for ((q, u), v) in alpha {
                    store.set_alpha(&q, &u, v)?;
                }
                for (k, v) in gamma {
                    store.set_gamma(k, v)?;
                }
                Ok(ModelParams::Gubm(store))
            }
            "ubm" => {
                let mut p = UbmParameters::new(policy()?, truncation()?, default()?);
                for ((q, u), v) in alpha {
                    p.set_alpha(&q, &u, v)?;
                }
                for ((r, d), v) in gamma_ubm {
                    p.set_gamma(r, d, v)?;
                }
                Ok(ModelParams::Ubm(p))
            }
            "truth" => Ok(ModelParams::Truth(TruthParams {
                alpha,
                meta: meta.into_iter().filter(|(k, _)| k != "model").collect(),
            })),
            other => Err(Error::parse(2, format!("unknown model {other:?}"))),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn format_has_nine_significant_digits() {
        assert_eq!(format_value(0.5), "5.00000000e-1");
        assert_eq!(format_value(0.123456789123), "1.23456789e-1");
        assert_eq!(format_value(1.0 - 1e-6), "9.99999000e-1");
        assert_eq!(format_value(1e-6), "1.00000000e-6");
    }

    #[test]
    fn gubm_file_layout() {
        let mut store = ParameterStore::new(DirectionPolicy::zshape(), 100, 0.5);
        store.set_alpha("q2", "b", 0.25).unwrap();
        store.set_alpha("q1", "z", 0.75).unwrap();
        store.set_gamma(GammaKey::new(2, 0, 3), 0.125).unwrap();
        store.set_gamma(GammaKey::new(1, 3, 0), 0.5).unwrap();
        let text = ModelParams::Gubm(store).to_text();
        let expected = "#gubm-params v1\n#model\tgubm\n#policy\tzshape\n#truncation\t100\n\
#default\t5.00000000e-1\nA\tq1\tz\t7.50000000e-1\nA\tq2\tb\t2.50000000e-1\n\
G\t1\t3\t0\t5.00000000e-1\nG\t2\t0\t3\t1.25000000e-1\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn rejects_bad_lines() {
        let bad = [
            "nope\n",
            "#gubm-params v1\n#model\tgubm\nX\t1\n",
            "#gubm-params v1\n#model\tgubm\n#policy\tltor\n#truncation\t5\n#default\t0.5\nA\tq\tu\t1.5\n",
            "#gubm-params v1\n#model\tgubm\n#policy\tltor\n#truncation\t5\n#default\t0.5\nG\t9\t0\t3\t0.5\n",
            "#gubm-params v1\n#model\tgubm\n",
        ];
        for text in bad {
            assert!(ModelParams::from_text(text).is_err(), "{text:?}");
        }
    }

    proptest! {
        #[test]
        fn read_write_is_byte_stable(
            alphas in proptest::collection::vec(("[a-z]{1,3}", "[a-z0-9]{1,4}", 0.0f64..=1.0), 0..20),
            gammas in proptest::collection::vec((0u32..30, 0u32..30, 0u32..30, 0.0f64..=1.0), 0..20),
            ubm in proptest::bool::ANY,
        ) {
            let params = if ubm {
                let mut p = UbmParameters::new(DirectionPolicy::zshape(), 100, 0.5);
                for (q, u, v) in &alphas {
                    p.set_alpha(q, u, *v).unwrap();
                }
                for &(r, d, _, v) in &gammas {
                    p.set_gamma(r, d % (r + 1) + 1, v).unwrap();
                }
                ModelParams::Ubm(p)
            } else {
                let mut p = ParameterStore::new(DirectionPolicy::RightToLeft, 64, 0.5);
                for (q, u, v) in &alphas {
                    p.set_alpha(q, u, *v).unwrap();
                }
                for &(a, b, c, v) in &gammas {
                    let mut key = [a, b, c];
                    key.sort();
                    p.set_gamma(GammaKey { i: key[1], m: key[0], n: key[2] }, v).unwrap();
                }
                ModelParams::Gubm(p)
            };
            let first = params.to_text();
            let reread = ModelParams::from_text(&first).unwrap();
            prop_assert_eq!(reread.model_name(), params.model_name());
            prop_assert_eq!(reread.to_text(), first);
        }
    }
}
