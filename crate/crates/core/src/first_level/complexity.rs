//! Closed-form operation counts for the frame-level solver and for policy
//! extraction.
//!
//! Arguments: `iterations` I, `frames` per GOP, `phases` C, `l_max`,
//! `frequencies` F, `processors` M and `children` U (largest child count).

pub fn vi_op_count(
    iterations: u64,
    frames: u64,
    phases: u64,
    l_max: u64,
    frequencies: u64,
    processors: u64,
    children: u64,
) -> u128 {
    let m = processors as u128;
    4 * iterations as u128
        * frames as u128
        * phases as u128
        * (l_max as u128 + 1)
        * frequencies as u128
        * (2 * m * m + children as u128)
}

pub fn policy_op_count(
    frames: u64,
    phases: u64,
    l_max: u64,
    processors: u64,
    frequencies: u64,
    children: u64,
) -> u128 {
    let (m, f) = (processors as u128, frequencies as u128);
    2 * frames as u128
        * phases as u128
        * (l_max as u128 + 1)
        * (4 * m * f + 2 * (m - 1) + 2 * f * children as u128)
}
