//! Serde adapters that show 0-based vertex ids as 1-based in JSON.

use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(*v as u64 + 1)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
    let v = u64::deserialize(d)?;
    if v == 0 {
        return Err(serde::de::Error::custom("vertex ids are 1-based"));
    }
    Ok(v as usize - 1)
}

pub mod vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| *x as u64 + 1))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let v = Vec::<u64>::deserialize(d)?;
        v.into_iter()
            .map(|x| {
                if x == 0 {
                    Err(serde::de::Error::custom("vertex ids are 1-based"))
                } else {
                    Ok(x as usize - 1)
                }
            })
            .collect()
    }
}
