#pragma once

// Binary model checkpoints. Layout (all integers little-endian):
//
//   "CRVAE"                       5-byte magic
//   u8   version (= 1)
//   u32  config length, then that many bytes of compact canonical JSON
//   one record per active parameter, in enumeration order (no count field -
//   the set is derived from the config):
//       u32 name length, name bytes (UTF-8, e.g. "encoder.0.kernel")
//       u8  rank, then u32 dims[rank]
//       f32[numel] values
//   u8   optimizer flag; if set, per parameter in the same order:
//       u8 state-present; if set: u64 t, f32[numel] m, f32[numel] v
//   u64  FNV-1a of every preceding byte
//
// Trailing bytes, short reads, name/shape drift and checksum mismatches are
// all load errors.

#include <string>

#include "crvae/config.hpp"

namespace crvae {

struct Checkpoint {
    TrainConfig config;
    ModelBundle<float> bundle;
    bool has_optimizer = false;
};

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const ModelBundle<float>& bundle, bool with_optimizer);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a of a whole file; lets tests compare artefacts without parsing them.
std::uint64_t file_hash(const std::string& path);

}  // namespace crvae
