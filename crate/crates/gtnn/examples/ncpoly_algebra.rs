//! Non-commutative polynomials: arithmetic, word counts and expansion
//! constants.

use gtnn::ncpoly::{enumerate_basis, word_count, NCPoly, Word};

fn main() -> gtnn::Result<()> {
    let x1 = NCPoly::var(2, 1)?;
    let x2 = NCPoly::var(2, 2)?;
    // X1 X2 and X2 X1 are different words.
    let a = x1.multiply(&x2)?;
    let b = x2.multiply(&x1)?;
    println!("X1*X2 = {a}, X2*X1 = {b}, difference = {}", a.sub(&b)?);

    let h = NCPoly::from_terms(
        2,
        [
            (Word::from_letters([2, 1]), 0.76),
            (Word::from_letters([1, 2]), 0.33),
            (Word::from_letters([1, 1, 1]), 0.3),
        ],
    )?;
    let c = h.expansion_constants();
    println!("h = {h}");
    println!("degree {:?}, C = {:.2}, C_j = {:?}", h.degree(), c.c_total, c.c_per_var);

    let sq = h.multiply(&h)?;
    println!("h^2 has {} terms of degree {:?}; truncated to degree 5: {} terms", sq.len(), sq.degree(), sq.truncate(5).len());

    let (top, words) = word_count(2, 3)?;
    println!("words of degree <= 3 in 2 letters: {words} ({top} of degree exactly 3)");
    let basis: Vec<String> = enumerate_basis(2, 2).iter().map(|w| w.to_string()).collect();
    println!("canonical order up to degree 2: {}", basis.join(", "));
    Ok(())
}
