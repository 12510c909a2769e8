#pragma once

#include <string>

#include "ttc/params.hpp"

namespace ttc {

// Checkpoint layout: magic "CSK1", a UTF-8 header (format line, config
// digest, optimizer step, tensor manifest with name/shape/byte offset,
// "end" terminator), then the little-endian 64-bit float payloads of each
// parameter and its Adam moments. Round trips are bit-exact.
void save_checkpoint(const ParamStore& store, const std::string& config_digest,
                     const std::string& path);

struct LoadedCheckpoint {
  ParamStore store;
  std::string config_digest;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ttc
