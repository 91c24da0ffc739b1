//! Largest-remainder (Hamilton) apportionment.

/// Splits `total` units across buckets in proportion to `weights`.
///
/// Each bucket gets the floor of its exact quota; leftover units go to the
/// largest fractional remainders, ties to the lower index. Arithmetic is
/// exact integer arithmetic. All-zero weights yield all zeros.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut alloc = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let scaled = total as u128 * w as u128;
        alloc.push((scaled / sum) as usize);
        rems.push((scaled % sum, i));
    }
    let given: usize = alloc.iter().sum();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(total - given) {
        alloc[i] += 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_proportions() {
        assert_eq!(largest_remainder(8, &[75, 25]), vec![6, 2]);
        assert_eq!(largest_remainder(10, &[50, 30, 20]), vec![5, 3, 2]);
        assert_eq!(largest_remainder(20, &[40, 30, 15, 10, 5]), vec![8, 6, 3, 2, 1]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(largest_remainder(2, &[1, 1, 1]), vec![1, 1, 0]);
    }

    #[test]
    fn zero_weights() {
        assert_eq!(largest_remainder(5, &[0, 0]), vec![0, 0]);
        assert_eq!(largest_remainder(5, &[0, 3]), vec![0, 5]);
    }
}
