#pragma once

#include <cstdint>
#include <string>

#include "oftta/data.hpp"
#include "oftta/layers.hpp"
#include "oftta/prototype.hpp"

namespace oftta {

// Model checkpoint plus the source-training input standardization statistics
// needed to reproduce the adaptation-time preprocessing.
struct SavedModel {
    NetworkModel model;
    AxisStats norm;
    bool has_norm = false;
};

std::uint32_t crc32(const void* data, std::size_t bytes,
                    std::uint32_t seed = 0);

// "OFTTA1" weight file: structured-text header (tensor name, role, shape,
// byte offset), contiguous little-endian float32 payload, CRC-32 footer.
void save_model(const std::string& path, const SavedModel& saved);
SavedModel load_model(const std::string& path);

// Debug snapshot: per-class entry counts, entropies, and centroids.
void export_support_snapshot(const std::string& path, const SupportSet& set);

} // namespace oftta
