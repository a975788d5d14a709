"""Authority processes: shard services, wire protocol, cross-shard routing, admin API."""
