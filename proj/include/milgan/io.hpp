#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "milgan/tensor.hpp"

namespace milgan {

/// Checkpoint container: named tensors plus integer metadata (dimensions,
/// hyperparameters). The on-disk format is versioned binary with shape
/// headers and raw little-endian doubles, so save/load round-trips are
/// bit-exact.
struct Checkpoint {
  std::string kind;  // "generator", "discriminator", "mm"
  std::map<std::string, std::int64_t> meta;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Flat `key = value` config file. Blank lines and lines starting with '#'
/// are skipped. Unknown keys are the caller's problem (callers validate).
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace milgan
