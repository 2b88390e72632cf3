#pragma once

// Shared layout for the binary checkpoint files: a magic line, a one-line
// JSON manifest, then a flat little-endian float64 payload.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace smaui::binio {

struct Checkpoint {
  nlohmann::json manifest;
  std::vector<double> payload;
};

void write(const std::filesystem::path& path, const std::string& magic, const nlohmann::json& manifest,
           const std::vector<double>& payload);
Checkpoint read(const std::filesystem::path& path, const std::string& magic);

}  // namespace smaui::binio
