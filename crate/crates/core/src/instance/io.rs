//! Plain-text instance format.
//!
//! ```text
//! # comment
//! N n_mandatory n_dynamic topology_label n_eras delta seed
//! id x y kind request_time        (N lines, kind in SD/ED/M/D)
//! ```

use std::io::Write;
use std::path::Path;

use super::{Customer, CustomerKind, Instance};
use crate::error::{Error, Result};
use crate::Scalar;

pub fn write_instance<T: Scalar, W: Write>(instance: &Instance<T>, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{} {} {} {} {} {} {}",
        instance.n(),
        instance.n_mandatory(),
        instance.n_dynamic(),
        instance.topology(),
        instance.n_eras(),
        instance.delta(),
        instance.seed()
    )?;
    for c in instance.customers() {
        writeln!(out, "{} {} {} {} {}", c.id, c.x, c.y, c.kind, c.request_time)?;
    }
    Ok(())
}

pub fn read_instance<T: Scalar>(path: impl AsRef<Path>) -> Result<Instance<T>> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn parse_instance<T: Scalar>(text: &str) -> Result<Instance<T>> {
    let mut records = text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    });

    let (header_line, header) = records.next().ok_or(Error::Parse { line: 1, message: "empty instance file".into() })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(parse_err(header_line, format!("header needs 7 fields, found {}", fields.len())));
    }
    let n: usize = field(header_line, fields[0], "N")?;
    let n_mandatory: usize = field(header_line, fields[1], "n_mandatory")?;
    let n_dynamic: usize = field(header_line, fields[2], "n_dynamic")?;
    let topology = fields[3];
    let n_eras: usize = field(header_line, fields[4], "n_eras")?;
    let delta: T = field(header_line, fields[5], "delta")?;
    let seed: u64 = field(header_line, fields[6], "seed")?;
    if n_mandatory + n_dynamic != n {
        return Err(parse_err(header_line, format!("n_mandatory + n_dynamic = {} but N = {n}", n_mandatory + n_dynamic)));
    }

    let mut customers: Vec<Customer<T>> = Vec::with_capacity(n);
    let mut seen = vec![false; n + 1];
    let mut last_line = header_line;
    for (line_no, line) in records {
        last_line = line_no;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(parse_err(line_no, format!("customer record needs 5 fields, found {}", f.len())));
        }
        let id: usize = field(line_no, f[0], "id")?;
        if id == 0 || id > n {
            return Err(parse_err(line_no, format!("id {id} outside 1..={n}")));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(parse_err(line_no, format!("duplicate customer id {id}")));
        }
        let kind: CustomerKind = f[3].parse().map_err(|e: Error| parse_err(line_no, e.to_string()))?;
        let customer = Customer {
            id,
            x: field(line_no, f[1], "x")?,
            y: field(line_no, f[2], "y")?,
            kind,
            request_time: field(line_no, f[4], "request_time")?,
        };
        customers.push(customer);
    }
    if customers.len() != n {
        return Err(parse_err(last_line, format!("expected {n} customers, found {}", customers.len())));
    }
    let instance = Instance::new(customers, topology, n_eras, delta, seed)?;
    if instance.n_dynamic() != n_dynamic {
        return Err(Error::Validation(format!(
            "header declares {n_dynamic} dynamic customers, records contain {}",
            instance.n_dynamic()
        )));
    }
    Ok(instance)
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn field<F: std::str::FromStr>(line: usize, raw: &str, name: &str) -> Result<F> {
    raw.parse().map_err(|_| parse_err(line, format!("cannot parse {name} from {raw:?}")))
}
