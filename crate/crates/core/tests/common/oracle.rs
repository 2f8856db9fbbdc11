//! Element-loop reference implementations in f64.

pub fn log_sigmoid(x: f64) -> f64 {
    // direct form is fine for the moderate logits used in the tests
    -(1.0 + (-x).exp()).ln()
}

pub fn gen_adversarial(logits: &[f64]) -> f64 {
    -logits.iter().map(|&x| log_sigmoid(x)).sum::<f64>() / logits.len() as f64
}

pub fn pixel_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn discriminator(real: &[f64], fake: &[f64]) -> f64 {
    let r = real
        .iter()
        .map(|&x| -(1.0 / (1.0 + (-x).exp())).ln())
        .sum::<f64>()
        / real.len() as f64;
    let f = fake
        .iter()
        .map(|&x| -(1.0 - 1.0 / (1.0 + (-x).exp())).ln())
        .sum::<f64>()
        / fake.len() as f64;
    r + f
}

/// `rows` are logits per item.
pub fn focal(rows: &[Vec<f64>], labels: &[u32], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (row, &l) in rows.iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let p = (row[l as usize] - m).exp() / z;
        total += -(1.0 - p).powf(gamma) * p.ln();
    }
    total / rows.len() as f64
}
