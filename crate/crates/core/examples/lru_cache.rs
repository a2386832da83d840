//! LRU admission and eviction in a cache service.
//!
//!     cargo run --example lru_cache

use gridflow::storage::{Admission, CacheState};
use gridflow::FileId;

fn file(name: &str, gb: u64) -> FileId {
    FileId { name: name.into(), size: gb * 1_000_000_000 }
}

fn main() {
    let mut cache = CacheState::new("t2-cache", "tier2", 10_000_000_000);
    for f in [file("a", 4), file("b", 3), file("c", 2)] {
        cache.admit(&f);
    }
    println!("resident, oldest first: {:?}", cache.lru_order());

    cache.touch("a");
    println!("after reading a:        {:?}", cache.lru_order());

    match cache.admit(&file("d", 5)) {
        Admission::Admitted { evicted } => {
            let names: Vec<_> = evicted.iter().map(|f| f.name.as_str()).collect();
            println!("admitting d evicts:     {names:?}");
        }
        Admission::Bypassed => unreachable!(),
    }
    println!("resident, oldest first: {:?} ({} of {} bytes)", cache.lru_order(), cache.used(), cache.capacity);

    assert_eq!(cache.admit(&file("huge", 11)), Admission::Bypassed);
    println!("an 11 GB file bypasses the cache; bypasses = {}", cache.bypasses);
}
