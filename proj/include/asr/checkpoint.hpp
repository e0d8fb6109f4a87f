#pragma once

#include <filesystem>
#include <string>

#include "asr/model.hpp"

namespace asr {

// Binary layout (all integers little-endian uint32, reals little-endian binary32):
//
//   "ASRCKPT1"                      8 magic bytes
//   version                         1 byte (kCheckpointVersion)
//   descriptor                      n, then n integers:
//                                   input_dim, num_classes, H, width_1..width_H, norm_1..norm_H
//   theta_t                         length, values
//   theta_pre                       length, values
//   running stats, per norm layer   mean (length, values), var (length, values)
//   source stats, per norm layer    mean (length, values), var (length, values)
//
// Loaded models normalize with their running statistics.
inline constexpr unsigned char kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelState& model);
ModelState decode_checkpoint(const std::string& bytes);

/// Atomic write (temporary file then rename).
void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace asr
