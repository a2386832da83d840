//! Small platforms shared by unit tests.

/// Two sites: `tier1` reads from its local grid storage, `tier2` reaches it
/// over a WAN link and has a 10 GB cache.
pub(crate) const TWO_SITE: &str = r#"
[defaults]
block_size = "100MB"
input_storage = "t1-storage"

[[sites]]
name = "tier1"

[[sites.hosts]]
name = "t1-node"
count = 2
cores = 8
core_speed = "1Gflops"
memory = "32GB"

[[sites.disks]]
name = "t1-storage"
read_bw = "10GB/s"
write_bw = "10GB/s"
role = "grid-storage"

[[sites]]
name = "tier2"
output_storage = "t1-storage"

[[sites.hosts]]
name = "t2-node"
count = 2
cores = 8
core_speed = "1Gflops"
memory = "32GB"

[[sites.disks]]
name = "t2-cache"
read_bw = "1GB/s"
write_bw = "1GB/s"
capacity = "10GB"
role = "cache"

[[links]]
name = "t1-lan"
bandwidth = "10GB/s"

[[links]]
name = "wan"
bandwidth = "1GB/s"
latency = "10ms"
wan = true

[[links]]
name = "t2-lan"
bandwidth = "10GB/s"

[[routes]]
endpoints = ["tier1", "t1-storage"]
links = ["t1-lan"]

[[routes]]
endpoints = ["tier2", "t1-storage"]
links = ["t2-lan", "wan", "t1-lan"]

[[routes]]
endpoints = ["tier2", "t2-cache"]
links = ["t2-lan"]
"#;
