//! Seeded random databases and queries in the supported dialect.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use text2nosql::DocValue;

pub const FIELDS: [&str; 5] = ["a", "b", "c", "d", "e"];
const INNER: [&str; 3] = ["x", "y", "z"];
const WORDS: [&str; 4] = ["red", "blue", "Red", "green"];

pub fn scalar(rng: &mut ChaCha8Rng) -> DocValue {
    match rng.gen_range(0..10) {
        0 => DocValue::Null,
        1 => DocValue::Bool(rng.gen()),
        2 => DocValue::Float(rng.gen_range(0..8) as f64 / 2.0),
        3 | 4 => DocValue::Str(WORDS.choose(rng).unwrap().to_string()),
        _ => DocValue::Int(rng.gen_range(0..6)),
    }
}

pub fn value(rng: &mut ChaCha8Rng, depth: usize) -> DocValue {
    if depth >= 3 {
        return scalar(rng);
    }
    match rng.gen_range(0..10) {
        0 | 1 => {
            let n = rng.gen_range(0..4);
            DocValue::Array((0..n).map(|_| value(rng, depth + 1)).collect())
        }
        2 | 3 => {
            let mut m = indexmap::IndexMap::new();
            for k in INNER {
                if rng.gen_bool(0.7) {
                    m.insert(k.to_string(), value(rng, depth + 1));
                }
            }
            DocValue::Obj(m)
        }
        _ => scalar(rng),
    }
}

pub fn collection(rng: &mut ChaCha8Rng) -> DocValue {
    let n = rng.gen_range(0..=50);
    DocValue::Array(
        (0..n)
            .map(|i| {
                let mut m = indexmap::IndexMap::new();
                m.insert("_id".to_string(), DocValue::Int(i));
                for f in FIELDS.iter().take(rng.gen_range(1..=5)) {
                    if rng.gen_bool(0.85) {
                        m.insert(f.to_string(), value(rng, 1));
                    }
                }
                DocValue::Obj(m)
            })
            .collect(),
    )
}

pub fn path(rng: &mut ChaCha8Rng) -> String {
    let f = FIELDS.choose(rng).unwrap();
    if rng.gen_bool(0.3) {
        format!("{f}.{}", INNER.choose(rng).unwrap())
    } else {
        f.to_string()
    }
}

pub fn literal(rng: &mut ChaCha8Rng) -> String {
    scalar(rng).to_json_string()
}

pub fn condition(rng: &mut ChaCha8Rng, depth: usize) -> String {
    let p = path(rng);
    match rng.gen_range(0..12) {
        0 if depth < 2 => format!(
            r#"{{"$or":[{},{}]}}"#,
            condition(rng, depth + 1),
            condition(rng, depth + 1)
        ),
        1 if depth < 2 => format!(
            r#"{{"$and":[{},{}]}}"#,
            condition(rng, depth + 1),
            condition(rng, depth + 1)
        ),
        2 => {
            let op = ["$gt", "$gte", "$lt", "$lte"].choose(rng).unwrap();
            format!(r#"{{"{p}":{{"{op}":{}}}}}"#, literal(rng))
        }
        3 => format!(r#"{{"{p}":{{"$in":[{},{}]}}}}"#, literal(rng), literal(rng)),
        4 => format!(r#"{{"{p}":{{"$nin":[{}]}}}}"#, literal(rng)),
        5 => format!(r#"{{"{p}":{{"$exists":{}}}}}"#, rng.gen::<bool>()),
        6 => format!(r#"{{"{p}":{{"$ne":{}}}}}"#, literal(rng)),
        7 => format!(r#"{{"{p}":{{"$size":{}}}}}"#, rng.gen_range(0..3)),
        8 => format!(r#"{{"{p}":{{"$not":{{"$gt":{}}}}}}}"#, literal(rng)),
        9 => format!(r#"{{"$expr":{{"$gt":["${p}","${}"]}}}}"#, path(rng)),
        _ => format!(r#"{{"{p}":{}}}"#, literal(rng)),
    }
}

pub fn stage(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..11) {
        0 | 1 => format!(r#"{{"$match":{}}}"#, condition(rng, 0)),
        2 => {
            let mut keys: Vec<String> = Vec::new();
            if rng.gen_bool(0.5) {
                for f in FIELDS.iter().filter(|_| rng.gen_bool(0.4)) {
                    keys.push(format!(r#""{f}":0"#));
                }
                if keys.is_empty() {
                    keys.push(r#""_id":0"#.into());
                }
            } else {
                if rng.gen_bool(0.5) {
                    keys.push(r#""_id":0"#.into());
                }
                keys.push(format!(r#""{}":1"#, path(rng)));
                if rng.gen_bool(0.5) {
                    keys.push(format!(r#""out":"${}""#, path(rng)));
                }
            }
            format!(r#"{{"$project":{{{}}}}}"#, keys.join(","))
        }
        3 => {
            let p = path(rng);
            if rng.gen_bool(0.3) {
                format!(r#"{{"$unwind":{{"path":"${p}","preserveNullAndEmptyArrays":true}}}}"#)
            } else {
                format!(r#"{{"$unwind":"${p}"}}"#)
            }
        }
        4 | 5 => {
            let id = match rng.gen_range(0..3) {
                0 => "null".to_string(),
                1 => format!(r#""${}""#, path(rng)),
                _ => format!(r#"{{"k1":"${}","k2":"${}"}}"#, path(rng), path(rng)),
            };
            let mut accs = Vec::new();
            for (i, op) in ["$sum", "$avg", "$min", "$max", "$push", "$addToSet", "$first", "$last"]
                .iter()
                .enumerate()
            {
                if rng.gen_bool(0.35) {
                    let arg = if *op == "$sum" && rng.gen_bool(0.4) {
                        "1".to_string()
                    } else {
                        format!(r#""${}""#, path(rng))
                    };
                    accs.push(format!(r#""acc{i}":{{"{op}":{arg}}}"#));
                }
            }
            let sep = if accs.is_empty() { "" } else { "," };
            format!(r#"{{"$group":{{"_id":{id}{sep}{}}}}}"#, accs.join(","))
        }
        6 => {
            let mut keys = vec![format!(r#""{}":{}"#, path(rng), if rng.gen() { 1 } else { -1 })];
            if rng.gen_bool(0.4) {
                keys.push(format!(r#""{}":{}"#, path(rng), if rng.gen() { 1 } else { -1 }));
            }
            format!(r#"{{"$sort":{{{}}}}}"#, keys.join(","))
        }
        7 => format!(r#"{{"$limit":{}}}"#, rng.gen_range(0..20)),
        8 => format!(r#"{{"$skip":{}}}"#, rng.gen_range(0..10)),
        9 => {
            if rng.gen_bool(0.5) {
                format!(
                    r#"{{"$lookup":{{"from":"other","localField":"{}","foreignField":"{}","as":"j"}}}}"#,
                    path(rng),
                    path(rng)
                )
            } else {
                format!(
                    r#"{{"$lookup":{{"from":"other","let":{{"v":"${}"}},"pipeline":[{{"$match":{{"$expr":{{"$eq":["${}","$$v"]}}}}}}],"as":"j"}}}}"#,
                    path(rng),
                    path(rng)
                )
            }
        }
        _ => r#"{"$count":"n"}"#.to_string(),
    }
}

pub fn query(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.25) {
        let mut q = format!("db.main.find({}", condition(rng, 0));
        if rng.gen_bool(0.4) {
            q += &format!(r#",{{"{}":1}}"#, path(rng));
        }
        q += ")";
        if rng.gen_bool(0.4) {
            q += &format!(r#".sort({{"{}":-1}})"#, path(rng));
        }
        if rng.gen_bool(0.3) {
            q += &format!(".limit({})", rng.gen_range(0..10));
        }
        return q;
    }
    let n = rng.gen_range(0..=4);
    let stages: Vec<String> = (0..n).map(|_| stage(rng)).collect();
    format!("db.main.aggregate([{}])", stages.join(","))
}
