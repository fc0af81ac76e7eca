//! Builtin example groups.

use crate::algebra::{BracketEntry, GroupSpec, MClass};
use crate::error::{Error, Result};

pub const NAMES: [&str; 8] =
    ["affine", "toeplitz2", "toeplitz3", "heisenberg", "highertf", "solvext", "toy3d", "example5d"];

/// Builds a spec from `[Z_i, Z_j] = c Z_k` (1-based), adding the
/// antisymmetric partner of every entry.
fn build(n1: usize, n2: usize, brackets: &[(usize, usize, usize, f64)], lambda: Vec<f64>) -> GroupSpec {
    let mut names: Vec<String> = (1..=n1).map(|k| format!("X{k}")).collect();
    names.extend((1..=n2).map(|k| format!("A{k}")));
    let mut entries = Vec::with_capacity(2 * brackets.len());
    for &(i, j, k, c) in brackets {
        entries.push(BracketEntry(i, j, k, c));
        entries.push(BracketEntry(j, i, k, -c));
    }
    GroupSpec::new(n1, n2, names, entries, lambda, Some(MClass::Commutative)).expect("builtin spec is well formed")
}

/// ax+b group: `[A1, X1] = X1`.
pub fn affine() -> GroupSpec {
    build(1, 1, &[(2, 1, 1, 1.0)], vec![1.0])
}

/// Toeplitz shearlet group with `n2 = n1 = n`: `A_k` (k < n) shift
/// `X_j` to `X_{j-k}`, `A_n` is the dilation.
pub fn toeplitz(n: usize) -> GroupSpec {
    assert!(n >= 2, "toeplitz needs n >= 2");
    let mut br = Vec::new();
    for k in 1..n {
        for j in (k + 1)..=n {
            br.push((n + k, j, j - k, 1.0));
        }
    }
    for j in 1..=n {
        br.push((2 * n, j, j, 1.0));
    }
    let mut lambda = vec![0.0; n];
    lambda[0] = 1.0;
    build(n, n, &br, lambda)
}

/// Step-two nilpotent group: `[A1, X2] = X1`.
pub fn heisenberg() -> GroupSpec {
    build(2, 1, &[(3, 2, 1, 1.0)], vec![1.0, 0.0])
}

/// Higher-order time-frequency group: `ad(a1 A1 + a2 A2)` restricted to p is
/// strictly upper triangular Toeplitz.
pub fn highertf() -> GroupSpec {
    build(3, 2, &[(4, 2, 1, 1.0), (4, 3, 2, 1.0), (5, 3, 1, 1.0)], vec![1.0, 0.0, 0.0])
}

/// R^3 extended by one Jordan block with eigenvalue 1.
pub fn solvext() -> GroupSpec {
    build(3, 1, &[(4, 1, 1, 1.0), (4, 2, 1, 1.0), (4, 2, 2, 1.0), (4, 3, 2, 1.0), (4, 3, 3, 1.0)], vec![1.0, 0.0, 0.0])
}

/// Three-dimensional toy group: `[A1, X1] = X1`, `[A1, X2] = X1 + X2`,
/// with the tuple J = (2).
pub fn toy3d() -> GroupSpec {
    build(2, 1, &[(3, 1, 1, 1.0), (3, 2, 1, 1.0), (3, 2, 2, 1.0)], vec![1.0, 0.0])
        .with_preferred_j(vec![2])
        .expect("valid J")
}

/// Five-dimensional example with two orbital charts (1,2) and (2,3).
pub fn example5d() -> GroupSpec {
    build(3, 2, &[(4, 2, 1, -1.0), (5, 1, 1, 1.0), (5, 2, 2, 1.0), (5, 3, 3, -2.0)], vec![1.0, -1.0, 1.0])
}

pub fn by_name(name: &str) -> Result<GroupSpec> {
    Ok(match name {
        "affine" => affine(),
        "toeplitz" | "toeplitz2" => toeplitz(2),
        "toeplitz3" => toeplitz(3),
        "heisenberg" => heisenberg(),
        "highertf" => highertf(),
        "solvext" => solvext(),
        "toy3d" | "toy" => toy3d(),
        "example5d" => example5d(),
        other => {
            return Err(Error::Schema {
                field: "example".into(),
                msg: format!("unknown builtin `{other}`; available: {}", NAMES.join(", ")),
            })
        }
    })
}

pub fn all() -> Vec<(&'static str, GroupSpec)> {
    NAMES.iter().map(|&n| (n, by_name(n).expect("listed builtin"))).collect()
}

/// One-line description for `list-examples`.
pub fn describe(name: &str) -> &'static str {
    match name {
        "affine" => "ax+b group, [A1,X1]=X1, lambda=X1*",
        "toeplitz2" => "Toeplitz shearlet group, n1=n2=2",
        "toeplitz3" => "Toeplitz shearlet group, n1=n2=3",
        "heisenberg" => "step-two nilpotent, [A1,X2]=X1 (Gabor case)",
        "highertf" => "higher-order time-frequency, n1=3, n2=2",
        "solvext" => "R^3 extended by a Jordan block",
        "toy3d" => "3-dim toy group, [A1,X1]=X1, [A1,X2]=X1+X2, J=(2)",
        "example5d" => "5-dim example with charts (1,2) and (2,3)",
        _ => "",
    }
}
