use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::edition::{Edition, SubsetOrigin, TableData};
use super::CatalogError;

/// Fixed seed mixed into object ids before hashing.
pub const PYRAMID_SEED: u64 = 0x243F_6A88_85A3_08D3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn pyramid_hash(id: i64) -> u64 {
    splitmix64(id as u64 ^ PYRAMID_SEED)
}

/// Keeps `id` in the subset of size `fraction`: hash below `fraction * 2^64`.
pub fn in_subset(id: i64, fraction: f64) -> bool {
    let threshold = (fraction * 18_446_744_073_709_551_616.0) as u128;
    (pyramid_hash(id) as u128) < threshold
}

/// Nested subsets of `edition`, one per fraction.
///
/// Rows are kept by id hash. Rows referenced through a foreign key from a
/// kept row are pulled in as well, so every subset satisfies the same
/// integrity constraints as its source.
pub fn make_pyramid(edition: &Edition, fractions: &[f64]) -> Result<Vec<Edition>, CatalogError> {
    for (i, f) in fractions.iter().enumerate() {
        if !(*f > 0.0 && *f <= 1.0) {
            return Err(CatalogError::BadFraction(*f));
        }
        if i > 0 && fractions[i - 1] > *f {
            return Err(CatalogError::BadFraction(*f));
        }
    }
    Ok(fractions.iter().map(|f| subset(edition, *f)).collect())
}

pub fn subset(edition: &Edition, fraction: f64) -> Edition {
    let mut keep: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for t in edition.tables() {
        let rows = (0..t.len() as u32).filter(|r| in_subset(t.pk(*r as usize), fraction)).collect();
        keep.insert(t.name().to_string(), rows);
    }
    let key_index: HashMap<&str, HashMap<i64, u32>> = edition
        .tables()
        .map(|t| (t.name(), (0..t.len() as u32).map(|r| (t.pk(r as usize), r)).collect()))
        .collect();
    loop {
        let mut added = false;
        for t in edition.tables() {
            for fk in &t.def().foreign_keys {
                let col = t.def().column_index(&fk.column).expect("validated");
                let wanted: Vec<u32> = keep[t.name()]
                    .iter()
                    .filter_map(|r| t.value(*r as usize, col).as_i64())
                    .filter_map(|v| key_index[fk.table.as_str()].get(&v).copied())
                    .collect();
                let target = keep.get_mut(&fk.table).expect("validated");
                for r in wanted {
                    added |= target.insert(r);
                }
            }
        }
        if !added {
            break;
        }
    }
    let tables: BTreeMap<String, TableData> = edition
        .tables()
        .map(|t| {
            let rows: Vec<u32> = keep[t.name()].iter().copied().collect();
            (t.name().to_string(), t.select_rows(&rows))
        })
        .collect();
    let origin = SubsetOrigin { edition: edition.number(), fraction };
    Edition::new(edition.number(), edition.schema().clone(), tables, Some(origin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_threshold_edges() {
        assert!((0..1000).all(|id| in_subset(id, 1.0)));
        let small = (0..100_000).filter(|id| in_subset(*id, 0.01)).count();
        assert!((800..1200).contains(&small), "{small}");
        assert!((0..10_000).filter(|id| in_subset(*id, 0.01)).all(|id| in_subset(id, 0.1)));
    }
}
