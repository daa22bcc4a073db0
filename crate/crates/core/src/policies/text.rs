//! Plain-text policy files: a `policy <kind>` header followed by labelled
//! fields. Scalars sit on the label line; matrices follow their label in the
//! usual `rows cols` + row-major format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::*;
use crate::linalg::{fmt_f64, read_matrix_tokens, write_matrix};

const SCALARS: &[&str] = &["x_min", "x_max", "u_min", "u_max", "coordinate", "du", "windup_cap"];

pub fn write_policy(policy: &Policy) -> Result<String> {
    let mut out = format!("policy {}\n", policy.kind());
    let mut mat = |label: &str, m: &Matrix| {
        out.push_str(label);
        out.push('\n');
        out.push_str(&write_matrix(m));
    };
    match policy {
        Policy::Linear(p) => mat("K", &p.k),
        Policy::Pid(p) => {
            mat("alpha", &p.alpha);
            mat("beta", &p.beta);
            mat("gamma_d", &p.gamma_d);
            if let Some(cap) = p.windup_cap {
                let _ = writeln!(out, "windup_cap {}", fmt_f64(cap));
            }
        }
        Policy::BangBang(p) => {
            for (k, v) in [("x_min", p.x_min), ("x_max", p.x_max), ("u_min", p.u_min), ("u_max", p.u_max)] {
                let _ = writeln!(out, "{k} {}", fmt_f64(v));
            }
            let _ = writeln!(out, "coordinate {}\ndu {}", p.coordinate, p.du);
        }
        Policy::Ldc(p) => {
            mat("A", &p.a);
            mat("B", &p.b);
            mat("C", &p.c);
            if let Some(d) = &p.d {
                mat("D", d);
            }
        }
        Policy::Glc(GlcPolicy { m }) => {
            for (i, mi) in m.iter().enumerate() {
                mat(&format!("M{i}"), mi);
            }
        }
        Policy::Drc(p) => {
            for (i, mi) in p.m.iter().enumerate() {
                mat(&format!("M{i}"), mi);
            }
            if let Some(o) = &p.offset {
                mat("offset", &Matrix::from_column_slice(o.len(), 1, o.as_slice()));
            }
        }
        Policy::Dac(p) => {
            match &p.stabilizer {
                Some(Stabilizer::Fixed(k)) => mat("K", k),
                Some(Stabilizer::Varying(_)) => {
                    return Err(Error::config("a DAC with a time-varying stabilizer cannot be written to text"))
                }
                None => {}
            }
            for (i, mi) in p.m.iter().enumerate() {
                mat(&format!("M{}", i + 1), mi);
            }
            if let Some(o) = &p.offset {
                mat("offset", &Matrix::from_column_slice(o.len(), 1, o.as_slice()));
            }
        }
    }
    Ok(out)
}

enum Field {
    Scalar(f64),
    Matrix(Matrix),
}

struct Fields(BTreeMap<String, Field>);

impl Fields {
    fn matrix(&mut self, key: &str) -> Result<Matrix> {
        self.opt_matrix(key)?
            .ok_or_else(|| Error::Parse(format!("policy file is missing `{key}`")))
    }

    fn opt_matrix(&mut self, key: &str) -> Result<Option<Matrix>> {
        match self.0.remove(key) {
            Some(Field::Matrix(m)) => Ok(Some(m)),
            Some(Field::Scalar(_)) => Err(Error::Parse(format!("`{key}` should be a matrix"))),
            None => Ok(None),
        }
    }

    fn scalar(&mut self, key: &str) -> Result<Option<f64>> {
        match self.0.remove(key) {
            Some(Field::Scalar(v)) => Ok(Some(v)),
            Some(Field::Matrix(_)) => Err(Error::Parse(format!("`{key}` should be a scalar"))),
            None => Ok(None),
        }
    }

    fn required(&mut self, key: &str) -> Result<f64> {
        self.scalar(key)?
            .ok_or_else(|| Error::Parse(format!("policy file is missing `{key}`")))
    }

    /// `M{first}`, `M{first+1}`, ... until the sequence stops.
    fn sequence(&mut self, first: usize) -> Result<Vec<Matrix>> {
        let mut out = Vec::new();
        while let Some(m) = self.opt_matrix(&format!("M{}", first + out.len()))? {
            out.push(m);
        }
        Ok(out)
    }

    fn offset(&mut self) -> Result<Option<Vector>> {
        match self.opt_matrix("offset")? {
            Some(m) if m.ncols() == 1 => Ok(Some(m.column(0).into_owned())),
            Some(_) => Err(Error::Parse("`offset` must be a column".into())),
            None => Ok(None),
        }
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(Error::Parse(format!("unexpected field `{k}` in policy file"))),
            None => Ok(()),
        }
    }
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some("policy") {
        return Err(Error::Parse("policy file must start with `policy <kind>`".into()));
    }
    let kind = tokens
        .next()
        .ok_or_else(|| Error::Parse("missing policy kind".into()))?
        .to_string();
    let mut map = BTreeMap::new();
    while let Some(label) = tokens.next() {
        let field = if SCALARS.contains(&label) {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing value for `{label}`")))?;
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad value `{tok}` for `{label}`")))?;
            Field::Scalar(v)
        } else {
            Field::Matrix(read_matrix_tokens(&mut tokens)?)
        };
        if map.insert(label.to_string(), field).is_some() {
            return Err(Error::Parse(format!("duplicate field `{label}`")));
        }
    }
    let mut f = Fields(map);
    let policy = match kind.as_str() {
        "linear" => Policy::Linear(LinearPolicy::new(f.matrix("K")?)),
        "pid" => {
            let mut p = PidPolicy::new(f.matrix("alpha")?, f.matrix("beta")?, f.matrix("gamma_d")?)?;
            p.windup_cap = f.scalar("windup_cap")?;
            Policy::Pid(p)
        }
        "bangbang" => {
            let mut p = BangBangPolicy::new(f.required("x_min")?, f.required("x_max")?, f.required("u_min")?, f.required("u_max")?)?;
            p.coordinate = f.scalar("coordinate")?.unwrap_or(0.0) as usize;
            p.du = f.scalar("du")?.unwrap_or(1.0) as usize;
            Policy::BangBang(p)
        }
        "ldc" => Policy::Ldc(LdcPolicy::new(f.matrix("A")?, f.matrix("B")?, f.matrix("C")?, f.opt_matrix("D")?)?),
        "glc" => Policy::Glc(GlcPolicy::new(f.sequence(0)?)?),
        "drc" => {
            let mut p = DrcPolicy::new(f.sequence(0)?)?;
            if let Some(o) = f.offset()? {
                p = p.with_offset(o)?;
            }
            Policy::Drc(p)
        }
        "dac" => {
            let k = f.opt_matrix("K")?.map(Stabilizer::Fixed);
            let mut p = DacPolicy::new(k, f.sequence(1)?)?;
            if let Some(o) = f.offset()? {
                p = p.with_offset(o)?;
            }
            Policy::Dac(p)
        }
        other => return Err(Error::Parse(format!("unknown policy kind `{other}`"))),
    };
    f.finish()?;
    Ok(policy)
}
