# Benchmark harness: datasets, experiment drivers, metrics and snapshots
