#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "defid/density.hpp"
#include "defid/tasks.hpp"

namespace defid {

// Plain-text frame format:
//   # frame t=<seconds> n=<count>
//   x y z            (count lines, %.17g, space separated)
// '#' lines elsewhere are comments. The reader is gzip-transparent.
void write_cloud_trajectory(const std::string& path,
                            const std::vector<PointCloudFrame>& frames);
std::vector<PointCloudFrame> read_cloud_trajectory(const std::string& path);

std::vector<PointCloudFrame> to_clouds(const Trajectory& traj);

// JSONL: one header record (format_version, task spec hash, generation
// config), then one demonstration per line. Concatenated shards read fine;
// embedded headers are validated and skipped.
struct DatasetFile {
    std::vector<Demonstration> demos;
    std::uint64_t spec_hash = 0;
    std::string generation_config;  // compact JSON echo of the generating config
};

void write_dataset(const std::string& path, const DatasetFile& data);
DatasetFile read_dataset(const std::string& path);

// All writes go through a temp file + rename.
void atomic_write_text(const std::string& path, const std::string& content);

std::uint64_t fnv1a(const std::string& s);

// Canonical float formatting that round-trips doubles exactly.
std::string format_double(double v);

}  // namespace defid
