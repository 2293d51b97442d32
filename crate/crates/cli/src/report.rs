//! Ordered key/value reports printed as `key = value` lines or JSON.

use serde_json::{Map, Number, Value};

/// Formats `x` with 6 significant digits, like C's `%g`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(u64),
    Bool(bool),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    fields: Vec<(String, Field)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, x: f64) -> &mut Self {
        self.fields.push((key.into(), Field::Num(x)));
        self
    }

    pub fn int(&mut self, key: &str, x: usize) -> &mut Self {
        self.fields.push((key.into(), Field::Int(x as u64)));
        self
    }

    pub fn flag(&mut self, key: &str, b: bool) -> &mut Self {
        self.fields.push((key.into(), Field::Bool(b)));
        self
    }

    pub fn extend(&mut self, other: Report) -> &mut Self {
        self.fields.extend(other.fields);
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, f) in &self.fields {
            let v = match f {
                Field::Num(x) => sig6(*x),
                Field::Int(i) => i.to_string(),
                Field::Bool(b) => b.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Numbers are rounded to 6 significant digits; non-finite ones become null.
    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        for (k, f) in &self.fields {
            let v = match f {
                Field::Num(x) => sig6(*x)
                    .parse::<f64>()
                    .ok()
                    .and_then(Number::from_f64)
                    .map_or(Value::Null, Value::Number),
                Field::Int(i) => Value::from(*i),
                Field::Bool(b) => Value::Bool(*b),
            };
            map.insert(k.clone(), v);
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("serializable");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(49.230951), "49.231");
        assert_eq!(sig6(49.23094), "49.2309");
        assert_eq!(sig6(0.409), "0.409");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(123456789.0), "1.23457e+08");
        assert_eq!(sig6(1e-7), "1e-07");
        assert_eq!(sig6(999999.5), "1e+06");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(f64::NAN), "nan");
    }

    #[test]
    fn text_and_json_keep_order() {
        let mut r = Report::new();
        r.num("e_r", 0.123456789).int("m", 42).flag("converged", true);
        assert_eq!(r.to_text(), "e_r = 0.123457\nm = 42\nconverged = true\n");
        let json: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["e_r"], Value::from(0.123457));
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["e_r", "m", "converged"]);
    }
}
