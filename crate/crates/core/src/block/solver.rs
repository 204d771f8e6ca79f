use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("target {0} is below 2; the smallest product of consecutive naturals is 1·2")]
pub struct DomainError(pub u64);

/// Smaller of two consecutive naturals whose product is `n`, i.e. the
/// positive root `(-1 + √(1+4n)) / 2` of `x(x+1) = n`, when it is a natural
/// number. The root is computed with an exact integer square root and the
/// product re-checked in wide integers.
pub fn solve_consecutive(n: u64) -> Result<Option<u64>, DomainError> {
    if n < 2 {
        return Err(DomainError(n));
    }
    let radicand = 1u128 + 4 * n as u128;
    let root = radicand.isqrt();
    if root * root != radicand {
        return Ok(None);
    }
    // radicand is odd, so an exact root is odd and root - 1 is even.
    let x = (root - 1) / 2;
    Ok((x * (x + 1) == n as u128).then_some(x as u64))
}
