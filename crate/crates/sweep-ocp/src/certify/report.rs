use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A supremum that is either a finite number or `+∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianValue {
    Finite(f64),
    PlusInfinity,
}

impl HamiltonianValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, HamiltonianValue::PlusInfinity)
    }

    /// Larger of two values.
    pub fn max(self, other: Self) -> Self {
        match (self, other) {
            (HamiltonianValue::Finite(a), HamiltonianValue::Finite(b)) => HamiltonianValue::Finite(a.max(b)),
            _ => HamiltonianValue::PlusInfinity,
        }
    }
}

/// One checked condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualItem {
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Underlying quantity when it differs from the residual, e.g. the
    /// nontriviality margin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl ResidualItem {
    /// `pass` iff `residual ≤ tolerance`; NaN fails.
    pub fn new(residual: f64, tolerance: f64) -> Self {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual.max(0.0) };
        Self {
            residual,
            tolerance,
            pass: residual <= tolerance,
            value: None,
        }
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }
}

/// Named residuals of a certificate check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub items: BTreeMap<String, ResidualItem>,
    /// Largest conventional Hamiltonian along the path, when evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conventional_hamiltonian: Option<HamiltonianValue>,
}

impl ResidualReport {
    pub fn insert(&mut self, name: &str, item: ResidualItem) {
        self.items.insert(name.to_string(), item);
    }

    pub fn get(&self, name: &str) -> Option<&ResidualItem> {
        self.items.get(name)
    }

    pub fn all_pass(&self) -> bool {
        self.items.values().all(|i| i.pass)
    }

    /// Names of the failing items.
    pub fn failures(&self) -> Vec<&str> {
        self.items.iter().filter(|(_, i)| !i.pass).map(|(k, _)| k.as_str()).collect()
    }
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

fn de_extended<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(v) => Ok(v),
        Num::S(s) if s == "inf" => Ok(f64::INFINITY),
        Num::S(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_follows_tolerance() {
        assert!(ResidualItem::new(1e-7, 1e-6).pass);
        assert!(!ResidualItem::new(2e-6, 1e-6).pass);
        assert!(!ResidualItem::new(f64::NAN, 1e-6).pass);
        assert_eq!(ResidualItem::new(-0.0, 0.0).residual, 0.0);
    }

    #[test]
    fn infinite_residuals_round_trip() {
        let mut r = ResidualReport::default();
        r.insert("measured_coderivative", ResidualItem::new(f64::INFINITY, 1e-6));
        r.insert("q_u", ResidualItem::new(0.0, 1e-6));
        r.conventional_hamiltonian = Some(HamiltonianValue::PlusInfinity);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""));
        let back: ResidualReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.failures(), vec!["measured_coderivative"]);
    }
}
