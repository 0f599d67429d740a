#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tra/common.hpp"

namespace tra {

// One record of the TRAW1 weight file.
struct WeightRecord {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

// Flat binary weight file: magic "TRAW1", then per-tensor records of
// name length (u64 LE), name bytes, rank (u64 LE), extents (i64 LE each) and
// values (f32 LE). Round-trips bit-exactly.
void write_traw1(const std::string& path, const std::vector<WeightRecord>& records);
std::vector<WeightRecord> read_traw1(const std::string& path);

// FNV-1a over the raw file bytes, as a content hash for run records.
std::string file_content_hash(const std::string& path);

} // namespace tra
