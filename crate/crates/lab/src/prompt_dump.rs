//! Token matrices as CSV, one row per token with its role.

use gla_core::data::{MultiTaskPrompt, TokenRole};

use crate::output::{csv_text, fmt_num};

pub fn prompt_csv(prompt: &MultiTaskPrompt) -> String {
    let d = prompt.d();
    let mut header = vec!["role".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.push("y".into());
    header.extend((1..=prompt.p).map(|j| format!("c{j}")));
    let rows: Vec<Vec<String>> = prompt
        .roles
        .iter()
        .enumerate()
        .map(|(i, role)| {
            let tag = match role {
                TokenRole::Data { segment } => format!("data{}", segment + 1),
                TokenRole::Delimiter { segment } => format!("delim{}", segment + 1),
                TokenRole::Query => "query".into(),
            };
            std::iter::once(tag).chain(prompt.z.row(i).iter().map(|v| fmt_num(*v))).collect()
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(&header, &rows)
}
