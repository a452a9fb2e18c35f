mod common;

use pledger::canon::{canonicalize, compute_hash, format_float, render};
use pledger::model::{parse_entry, serialize_entry, LedgerId};
use proptest::prelude::*;
use serde_json::{Map, Value};

fn segment() -> impl Strategy<Value = String> {
    "[a-z0-9-]{1,8}"
}

proptest! {
    #[test]
    fn canonical_floats_round_trip(f in any::<f64>().prop_filter("finite", |f| f.is_finite())) {
        let s = format_float(f).unwrap();
        prop_assert!(!s.contains('e') && !s.contains('E'));
        prop_assert_eq!(s.parse::<f64>().unwrap(), if f == 0.0 { 0.0 } else { f });
    }

    #[test]
    fn key_order_does_not_change_canonical_bytes(pairs in prop::collection::btree_map("[a-zA-Z_]{1,6}", any::<i64>(), 1..8)) {
        let forward: Map<String, Value> = pairs.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        let mut backward = Map::new();
        for (k, v) in pairs.iter().rev() {
            backward.insert(k.clone(), Value::from(*v));
        }
        prop_assert_eq!(render(&Value::Object(forward)).unwrap(), render(&Value::Object(backward)).unwrap());
    }

    #[test]
    fn rendered_strings_parse_back(s in any::<String>()) {
        let bytes = render(&Value::String(s.clone())).unwrap();
        let back: Value = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(back, Value::String(s));
    }

    #[test]
    fn revisions_share_a_lineage(segs in prop::collection::vec(segment(), 2..5), k in 1u32..1000) {
        let base = LedgerId::parse(&format!("pl:voucher:{}", segs.join(":"))).unwrap();
        let rev = base.with_revision(k);
        prop_assert_eq!(rev.revision(), Some(k));
        prop_assert_eq!(rev.lineage(), base.lineage());
        prop_assert_eq!(rev.with_revision(k + 1).lineage(), base.lineage());
        prop_assert!(LedgerId::parse(rev.as_str()).is_ok());
    }

    #[test]
    fn contribution_round_trip_preserves_the_digest(pseudonym in "[a-zA-Z0-9 _-]{1,20}", text in any::<String>()) {
        let e = common::contribution("pl:contrib:x:1", &pseudonym, common::minute(0));
        let mut doc: Value = serde_json::from_str(&serialize_entry(&e).unwrap()).unwrap();
        doc["contribution"]["summary"] = Value::String(text);
        let e = parse_entry(&doc.to_string()).unwrap();
        let again = parse_entry(&serialize_entry(&e).unwrap()).unwrap();
        prop_assert_eq!(&again, &e);
        let h = |x| compute_hash(&canonicalize(x, None).unwrap());
        prop_assert_eq!(h(&again), h(&e));
    }
}
