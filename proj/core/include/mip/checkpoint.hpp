#pragma once

#include <filesystem>
#include <string>

#include "mip/data.hpp"
#include "mip/model.hpp"

namespace mip {

/// Contents of a checkpoint archive.
struct Checkpoint {
  ModelConfig model;
  Index features = 0;
  Index steps = 0;
  GeoGraph graph;
  Normalizer normalizer;
  ParameterStore params;
  /// Full run configuration as JSON text ("{}" when unknown).
  std::string run_config = "{}";

  MipModel restore() const;
};

/// Single-file archive: 8-byte magic "MIPCKPT1", little-endian uint64 header
/// length, JSON header (configs, tensor names, shapes, dtype, byte offsets),
/// then the raw little-endian float64 payload. Values round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const MipModel& model,
                     const Normalizer& normalizer, const std::string& run_config = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mip
