#include "defid/io.hpp"

#include <zlib.h>

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

namespace defid {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::FILE* f = std::fopen(tmp.c_str(), "wb");
        if (!f) throw IoError("cannot open for writing: " + tmp);
        const std::size_t n = std::fwrite(content.data(), 1, content.size(), f);
        const bool ok = n == content.size() && std::fclose(f) == 0;
        if (!ok) {
            std::remove(tmp.c_str());
            throw IoError("failed writing: " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw IoError("failed renaming " + tmp + " to " + path + ": " + ec.message());
    }
}

void write_cloud_trajectory(const std::string& path,
                            const std::vector<PointCloudFrame>& frames) {
    if (frames.empty()) throw ConfigError("write_cloud_trajectory: no frames");
    std::string out;
    out.reserve(frames.size() * (frames.front().points.size() + 1) * 48);
    for (const auto& f : frames) {
        out += "# frame t=" + format_double(f.time) +
               " n=" + std::to_string(f.points.size()) + "\n";
        for (const auto& p : f.points) {
            out += format_double(p.x);
            out += ' ';
            out += format_double(p.y);
            out += ' ';
            out += format_double(p.z);
            out += '\n';
        }
    }
    atomic_write_text(path, out);
}

namespace {

// zlib's gzFile reads both plain and gzip-compressed files.
std::string slurp_transparent(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open: " + path);
    std::string data;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) data.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw IoError("decompression failed: " + path);
    return data;
}

}  // namespace

std::vector<PointCloudFrame> read_cloud_trajectory(const std::string& path) {
    const std::string data = slurp_transparent(path);
    std::vector<PointCloudFrame> frames;
    std::istringstream is(data);
    std::string line;
    long line_no = 0;
    long remaining = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# frame ", 0) == 0) {
                if (remaining > 0)
                    throw ParseError("frame header before previous frame completed", line_no);
                double t = 0.0;
                long n = -1;
                if (std::sscanf(line.c_str(), "# frame t=%lf n=%ld", &t, &n) != 2 || n < 1)
                    throw ParseError("malformed frame header '" + line + "'", line_no);
                if (!frames.empty() && t <= frames.back().time)
                    throw ParseError("frame times must be strictly increasing", line_no);
                frames.push_back({t, {}});
                frames.back().points.reserve(static_cast<std::size_t>(n));
                remaining = n;
            }
            continue;
        }
        if (frames.empty() || remaining == 0)
            throw ParseError("point line outside a frame block", line_no);
        Vec3 p;
        if (std::sscanf(line.c_str(), "%lf %lf %lf", &p.x, &p.y, &p.z) != 3)
            throw ParseError("malformed point line '" + line + "'", line_no);
        if (!all_finite(p)) throw ParseError("non-finite coordinate", line_no);
        frames.back().points.push_back(p);
        --remaining;
    }
    if (remaining > 0)
        throw ParseError("file ended mid-frame (" + std::to_string(remaining) +
                             " points missing)",
                         line_no);
    if (frames.empty()) throw ParseError("no frames in file: " + path, line_no);
    return frames;
}

std::vector<PointCloudFrame> to_clouds(const Trajectory& traj) {
    std::vector<PointCloudFrame> out;
    out.reserve(traj.frames.size());
    for (const auto& f : traj.frames) out.push_back({f.time, f.positions});
    return out;
}

void write_dataset(const std::string& path, const DatasetFile& data) {
    std::string out;
    json header;
    header["format_version"] = 1;
    header["task_spec_hash"] = data.spec_hash;
    header["generation_config"] = data.generation_config;
    out += header.dump() + "\n";
    for (const auto& d : data.demos) {
        json j;
        j["task"] = to_string(d.task);
        j["e"] = d.e;
        j["nu"] = d.nu;
        j["y"] = d.y;
        j["x"] = d.x;
        j["seed"] = d.seed;
        out += j.dump() + "\n";
    }
    atomic_write_text(path, out);
}

DatasetFile read_dataset(const std::string& path) {
    const std::string data = slurp_transparent(path);
    DatasetFile out;
    std::istringstream is(data);
    std::string line;
    long line_no = 0;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad dataset record: ") + e.what(), line_no);
        }
        if (j.contains("format_version")) {
            // Header record; shards concatenate, so accept repeats.
            if (j["format_version"].get<int>() != 1)
                throw ParseError("unsupported dataset format_version", line_no);
            if (!saw_header) {
                out.spec_hash = j.value("task_spec_hash", 0ull);
                out.generation_config = j.value("generation_config", std::string());
                saw_header = true;
            }
            continue;
        }
        if (!saw_header) throw ParseError("dataset record before header", line_no);
        try {
            Demonstration d;
            d.task = task_from_string(j.at("task").get<std::string>());
            d.e = j.at("e").get<double>();
            d.nu = j.at("nu").get<double>();
            d.y = j.at("y").get<std::vector<double>>();
            d.x = j.at("x").get<std::vector<double>>();
            d.seed = j.at("seed").get<std::uint64_t>();
            out.demos.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad demonstration record: ") + e.what(), line_no);
        }
    }
    if (!saw_header) throw ParseError("dataset has no header record", line_no);
    return out;
}

}  // namespace defid
